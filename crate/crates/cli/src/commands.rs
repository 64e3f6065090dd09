//! Subcommand implementations. Each returns the text for stdout.

use std::fs;
use std::path::{Path, PathBuf};

use percop::calibration::calibrate_marginal;
use percop::lvmc::{dupire_local_vol, mc_price_quanto, McConfig};
use percop::marketdata::{ScenarioConfig, UnderlyingSpec, VolSurface};
use percop::numerics::normal_cdf;
use percop::perturbed::{marginal_p, u0_density, JointParams, MarginalParams, PerturbedCopula};
use percop::pricing::{
    gaussian_copula_density, imply_perturbed_corr_on, Copula, CopulaChoice, QuantoGrid, QuantoSpec,
};
use rayon::prelude::*;

use crate::error::CliError;
use crate::files::{
    read_surface, read_text, render_surface, scenario_dirs, template_slopes, write_text, GenConfig, Scenario,
    ScenarioFile, SCENARIO_FILE,
};
use crate::format::{cell, g10};
use crate::manifest::RunManifest;

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn scenario_gen(config: &Path, out: &Path) -> Result<String, CliError> {
    let cfg = GenConfig::parse(&read_text(config)?).map_err(|e| e.context(&config.display().to_string()))?;
    let mut manifest = RunManifest::new("scenario-gen");
    manifest.input(config)?;
    manifest.setting("skew", g10(cfg.scenarios.skew));
    create_dir(out)?;
    let opt = &cfg.option;
    let discount = (-opt.domestic_rate * opt.maturity).exp();
    let spec = |u: &crate::files::UnderlyingSection, slope: f64| UnderlyingSpec {
        spot: u.spot,
        atm_vol: u.atm_vol,
        skew_slope: slope,
        foreign_rate: u.foreign_rate,
    };
    let mut index = manifest.render() + "scenario,template,rho,slope1,slope2\n";
    let mut n = 0;
    for name in &cfg.scenarios.templates {
        let (a1, a2) = template_slopes(name, cfg.scenarios.skew)?;
        for &rho in &cfg.scenarios.correlations {
            n += 1;
            let sc = ScenarioConfig {
                underlying1: spec(&cfg.underlying1, a1),
                underlying2: spec(&cfg.underlying2, a2),
                rho,
                maturity: opt.maturity,
                domestic_rate: opt.domestic_rate,
                strikes: Vec::new(),
            };
            let (s1, s2) = sc.surfaces()?;
            let id = format!("{n:02}-{name}");
            let dir = out.join(&id);
            create_dir(&dir)?;
            write_text(&dir.join("surface1.csv"), &render_surface(&s1, &manifest))?;
            write_text(&dir.join("surface2.csv"), &render_surface(&s2, &manifest))?;
            let file = ScenarioFile {
                id: id.clone(),
                template: name.clone(),
                rho,
                maturity: opt.maturity,
                discount,
                kind: opt.kind,
                strikes: opt.moneyness.iter().map(|m| m * s1.forward).collect(),
                surface1: "surface1.csv".into(),
                surface2: "surface2.csv".into(),
                mc: cfg.mc,
            };
            let body = toml::to_string(&file).map_err(|e| CliError::input(e.to_string()))?;
            write_text(&dir.join(SCENARIO_FILE), &(manifest.render() + &body))?;
            index += &format!("{id},{name},{},{},{}\n", g10(rho), g10(a1), g10(a2));
        }
    }
    write_text(&out.join("index.csv"), &index)?;
    Ok(format!("wrote {n} scenarios to {}\n", out.display()))
}

const REPORT_HEADER: &str =
    "surface,forward,maturity,sigma,r_skew,beta,beta_iterations,nr_iterations,residual_call,residual_put\n";

pub fn calibrate(surface: &Path, report: Option<&Path>) -> Result<String, CliError> {
    let s = read_surface(surface)?;
    let c = calibrate_marginal(&s).map_err(|e| CliError::from(e).context(&surface.display().to_string()))?;
    let p = c.params;
    let [rc, rp] = c.price_residuals;
    let mut out = String::new();
    for (k, v) in [
        ("sigma", g10(p.sigma)),
        ("r_skew", g10(p.r_skew)),
        ("beta", g10(p.beta)),
        ("beta_iterations", c.beta_iterations.to_string()),
        ("nr_iterations", c.nr_iterations.to_string()),
        ("residual_call", g10(rc)),
        ("residual_put", g10(rp)),
    ] {
        out += &format!("{k} = {v}\n");
    }
    if let Some(path) = report {
        let row = format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            surface.display(),
            g10(s.forward),
            g10(s.maturity),
            g10(p.sigma),
            g10(p.r_skew),
            g10(p.beta),
            c.beta_iterations,
            c.nr_iterations,
            g10(rc),
            g10(rp)
        );
        let text = if path.exists() {
            read_text(path)? + &row
        } else {
            let mut m = RunManifest::new("calibrate");
            m.input(surface)?;
            m.render() + REPORT_HEADER + &row
        };
        write_text(path, &text)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CopulaArg {
    Gaussian,
    Perturbed,
    Both,
}

#[derive(Debug, Clone)]
pub struct PriceArgs {
    pub scenarios: Vec<PathBuf>,
    pub copula: CopulaArg,
    pub match_quanto_forward: bool,
    pub strikes: Vec<f64>,
    pub maturity: Option<f64>,
    pub rho: Option<f64>,
    pub mc: bool,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub steps_per_year: Option<usize>,
}

struct PriceRow {
    scenario: String,
    strike: f64,
    maturity: f64,
    rho: f64,
    gcop: Option<f64>,
    pcop: Option<f64>,
    lvmc: Option<(f64, f64)>,
}

impl PriceRow {
    fn render(&self) -> String {
        let diff = match (self.gcop, self.pcop) {
            (Some(g), Some(p)) => Some(1e4 * (p - g)),
            _ => None,
        };
        format!(
            "{},{},{},{},{},{},{},{},{}\n",
            self.scenario,
            g10(self.strike),
            g10(self.maturity),
            g10(self.rho),
            cell(self.gcop),
            cell(self.pcop),
            cell(diff),
            cell(self.lvmc.map(|x| x.0)),
            cell(self.lvmc.map(|x| x.1))
        )
    }
}

impl PriceArgs {
    fn mc_config(&self, sc: &Scenario) -> McConfig {
        let mut c = McConfig::from(sc.file.mc);
        c.paths = self.paths.unwrap_or(c.paths);
        c.seed = self.seed.unwrap_or(c.seed);
        c.steps_per_year = self.steps_per_year.unwrap_or(c.steps_per_year);
        c
    }
}

fn price_scenario(sc: &Scenario, a: &PriceArgs) -> Result<(Vec<PriceRow>, Option<f64>), CliError> {
    let (s1, s2) = (&sc.surface1, &sc.surface2);
    let t = s1.maturity;
    if let Some(m) = a.maturity {
        if m != t {
            return Err(percop::Error::MaturityMismatch { first: m, second: t }.into());
        }
    }
    let rho = a.rho.unwrap_or(sc.file.rho);
    let strikes = if a.strikes.is_empty() { sc.file.strikes.clone() } else { a.strikes.clone() };
    let grid = QuantoGrid::new(s1, s2, &strikes)?;
    let gauss = Copula::new(&CopulaChoice::Gaussian { rho })?;
    let mut implied = None;
    let pert = if a.copula == CopulaArg::Gaussian {
        None
    } else {
        let c1 = calibrate_marginal(s1)?;
        let c2 = calibrate_marginal(s2)?;
        let mut jp = JointParams::new(c1.params, c2.params, rho, t)?;
        if a.match_quanto_forward {
            let r = imply_perturbed_corr_on(&grid, grid.quanto_forward(&gauss)?, &jp)?;
            implied = Some(r);
            jp = jp.with_rho(r)?;
        }
        Some(Copula::new(&CopulaChoice::Perturbed(jp))?)
    };
    let lv = if a.mc { Some((dupire_local_vol(s1)?, dupire_local_vol(s2)?)) } else { None };
    let cfg = a.mc_config(sc);
    let mut rows = Vec::new();
    for &k in &strikes {
        let spec = QuantoSpec {
            strike: k,
            maturity: t,
            discount: sc.file.discount,
            kind: sc.file.kind.into(),
        };
        let gcop = if a.copula == CopulaArg::Perturbed { None } else { Some(grid.price(&spec, &gauss)?.pv) };
        let pcop = match &pert {
            Some(c) => Some(grid.price(&spec, c)?.pv),
            None => None,
        };
        let lvmc = match &lv {
            Some((l1, l2)) => {
                let e = mc_price_quanto(k, t, spec.discount, spec.kind, l1, s1.forward, l2, s2.forward, rho, &cfg)?;
                Some((e.value, e.stderr))
            }
            None => None,
        };
        rows.push(PriceRow {
            scenario: sc.file.id.clone(),
            strike: k,
            maturity: t,
            rho,
            gcop,
            pcop,
            lvmc,
        });
    }
    Ok((rows, implied))
}

pub const PRICE_HEADER: &str = "scenario,K,T,rho,gcop,pcop,p_minus_g_bp,lvmc,lvmc_stderr\n";

/// Returns the CSV and informational lines for stderr.
pub fn price(a: &PriceArgs) -> Result<(String, Vec<String>), CliError> {
    if a.match_quanto_forward && a.copula == CopulaArg::Gaussian {
        return Err(CliError::input("--match-quanto-forward needs the perturbed copula"));
    }
    if a.strikes.iter().any(|k| k.is_nan() || *k <= 0.0) {
        return Err(CliError::input("strikes must be positive"));
    }
    let mut dirs = Vec::new();
    for p in &a.scenarios {
        dirs.extend(scenario_dirs(p)?);
    }
    let scenarios: Vec<Scenario> = dirs.iter().map(|d| Scenario::load(d)).collect::<Result<_, _>>()?;
    if a.mc {
        for sc in &scenarios {
            a.mc_config(sc).validate()?;
        }
    }
    let results: Vec<_> = scenarios
        .par_iter()
        .map(|sc| price_scenario(sc, a).map_err(|e| e.context(&sc.file.id)))
        .collect();
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (sc, r) in scenarios.iter().zip(results) {
        let (r, implied) = r?;
        if let Some(x) = implied {
            notes.push(format!("{}: implied perturbed rho {}", sc.file.id, g10(x)));
        }
        rows.extend(r);
    }
    rows.sort_by(|x, y| x.scenario.cmp(&y.scenario).then(x.strike.total_cmp(&y.strike)));

    let mut m = RunManifest::new("price");
    for sc in &scenarios {
        for p in sc.input_paths() {
            m.input(&p)?;
        }
    }
    m.setting("copula", format!("{:?}", a.copula).to_lowercase());
    m.setting("match_quanto_forward", a.match_quanto_forward);
    if a.mc {
        if let Some(sc) = scenarios.first() {
            let c = a.mc_config(sc);
            m.seed = Some(c.seed);
            m.setting("paths", c.paths);
            m.setting("steps_per_year", c.steps_per_year);
            m.setting("antithetic", c.antithetic);
        }
    }
    let mut out = m.render() + PRICE_HEADER;
    for r in &rows {
        out += &r.render();
    }
    Ok((out, notes))
}

#[derive(Debug, Clone, Default)]
pub struct DensityArgs {
    pub scenario: Option<PathBuf>,
    pub sigma1: Option<f64>,
    pub r1: f64,
    pub sigma2: Option<f64>,
    pub r2: f64,
    pub maturity: Option<f64>,
    pub rho: Option<f64>,
    pub grid: usize,
    pub out: PathBuf,
}

/// Half-width of the density grids in standard deviations.
const DENSITY_STD: f64 = 6.0;

pub fn density(a: &DensityArgs) -> Result<String, CliError> {
    if a.grid < 2 {
        return Err(CliError::input("--grid must be at least 2"));
    }
    let mut m = RunManifest::new("density");
    m.setting("grid", a.grid);
    let (params, surfaces): (JointParams, Option<[VolSurface; 2]>) = match &a.scenario {
        Some(dir) => {
            let sc = Scenario::load(dir)?;
            for p in sc.input_paths() {
                m.input(&p)?;
            }
            let t = sc.surface1.maturity;
            if let Some(mt) = a.maturity {
                if mt != t {
                    return Err(percop::Error::MaturityMismatch { first: mt, second: t }.into());
                }
            }
            let c1 = calibrate_marginal(&sc.surface1)?;
            let c2 = calibrate_marginal(&sc.surface2)?;
            let p = JointParams::new(c1.params, c2.params, a.rho.unwrap_or(sc.file.rho), t)?;
            (p, Some([sc.surface1, sc.surface2]))
        }
        None => {
            let need = |x: Option<f64>, n: &str| x.ok_or_else(|| CliError::input(format!("--{n} is required without a scenario")));
            let m1 = MarginalParams::new(need(a.sigma1, "sigma1")?, a.r1, 0.0)?;
            let m2 = MarginalParams::new(need(a.sigma2, "sigma2")?, a.r2, 0.0)?;
            (JointParams::new(m1, m2, a.rho.unwrap_or(0.0), a.maturity.unwrap_or(1.0))?, None)
        }
    };
    m.setting("sigma1", g10(params.m1.sigma));
    m.setting("r1", g10(params.m1.r_skew));
    m.setting("sigma2", g10(params.m2.sigma));
    m.setting("r2", g10(params.m2.r_skew));
    m.setting("rho", g10(params.rho));
    m.setting("tau", g10(params.tau));
    let cop = PerturbedCopula::new(&params)?;
    let st = params.tau.sqrt();
    let scales = [params.m1.sigma * st, params.m2.sigma * st];
    let n = a.grid;
    let axis = |s: f64| -> Vec<f64> {
        (0..n).map(|i| s * DENSITY_STD * (2.0 * i as f64 / (n - 1) as f64 - 1.0)).collect()
    };
    let (x1, x2) = (axis(scales[0]), axis(scales[1]));
    let rho = params.rho;
    let blocks: Vec<String> = x1
        .par_iter()
        .map(|&a1| {
            let mut s = String::new();
            let z1 = normal_cdf(a1 / scales[0]);
            for &a2 in &x2 {
                let c = cop.copula_density_at(a1, a2);
                let g = gaussian_copula_density(z1, normal_cdf(a2 / scales[1]), rho).unwrap_or(f64::NAN);
                s += &format!(
                    "{},{},{},{},{},{},{}\n",
                    g10(a1),
                    g10(a2),
                    g10(u0_density(a1, a2, &params)),
                    g10(cop.joint_density(a1, a2)),
                    g10(c),
                    g10(g),
                    g10(c / g)
                );
            }
            s
        })
        .collect();
    create_dir(&a.out)?;
    let head = m.render();
    write_text(
        &a.out.join("joint.csv"),
        &(head.clone() + "xi1,xi2,u0,u_eps,copula,gauss_copula,ratio\n" + &blocks.concat()),
    )?;
    let marginals = [(cop.marginal1(), &params.m1, &x1), (cop.marginal2(), &params.m2, &x2)];
    for (i, (pm, mp, xs)) in marginals.into_iter().enumerate() {
        let mut body = head.clone() + "xi,p0,v_eps,empirical\n";
        for &x in xs.iter() {
            let emp = surfaces.as_ref().map(|s| s[i].empirical_density(mp.beta + x));
            body += &format!("{},{},{},{}\n", g10(x), g10(marginal_p(x, mp, params.tau)), g10(pm.density(x)), cell(emp));
        }
        write_text(&a.out.join(format!("marginal{}.csv", i + 1)), &body)?;
    }
    Ok(format!("wrote joint.csv, marginal1.csv, marginal2.csv to {}\n", a.out.display()))
}
