//! Scenario configuration, scenario files and surface CSVs.
//!
//! A surface file is UTF-8 text: an optional manifest block of `#` lines,
//! `key = value` lines for `forward`, `maturity`, `discount` and optionally
//! `extrapolation` (`flat` or `linear-variance`), then a `strike,vol` header
//! and one quote per line.

use std::fs;
use std::path::{Path, PathBuf};

use percop::lvmc::McConfig;
use percop::marketdata::{Extrapolation, OptionKind, VolSurface};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::format::g10;
use crate::manifest::RunManifest;

pub const SCENARIO_FILE: &str = "scenario.toml";

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn parse_surface(text: &str) -> Result<VolSurface, CliError> {
    let (mut forward, mut maturity, mut discount) = (None, None, None);
    let mut extrapolation = Extrapolation::Flat;
    let mut quotes = Vec::new();
    let mut in_quotes = false;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let at = |msg: &str| CliError::input(format!("line {}: {msg}", n + 1));
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_quotes {
            if line.replace(' ', "") == "strike,vol" {
                in_quotes = true;
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| at("expected key = value or strike,vol"))?;
            let v = v.trim().trim_matches('"');
            let num = || v.parse::<f64>().map_err(|_| at("not a number"));
            match k.trim() {
                "forward" => forward = Some(num()?),
                "maturity" => maturity = Some(num()?),
                "discount" => discount = Some(num()?),
                "extrapolation" => {
                    extrapolation = match v {
                        "flat" => Extrapolation::Flat,
                        "linear-variance" => Extrapolation::LinearVariance,
                        _ => return Err(at("extrapolation must be flat or linear-variance")),
                    }
                }
                other => return Err(at(&format!("unknown key {other}"))),
            }
        } else {
            let (k, v) = line.split_once(',').ok_or_else(|| at("expected strike,vol"))?;
            let k = k.trim().parse::<f64>().map_err(|_| at("bad strike"))?;
            let v = v.trim().parse::<f64>().map_err(|_| at("bad vol"))?;
            quotes.push((k, v));
        }
    }
    let need = |x: Option<f64>, name: &str| x.ok_or_else(|| CliError::input(format!("missing {name}")));
    Ok(VolSurface::with_extrapolation(
        need(forward, "forward")?,
        need(maturity, "maturity")?,
        discount.unwrap_or(1.0),
        quotes,
        extrapolation,
    )?)
}

pub fn read_surface(path: &Path) -> Result<VolSurface, CliError> {
    parse_surface(&read_text(path)?).map_err(|e| e.context(&path.display().to_string()))
}

pub fn render_surface(s: &VolSurface, manifest: &RunManifest) -> String {
    let mut out = manifest.render();
    out += &format!("forward = {}\nmaturity = {}\ndiscount = {}\n", g10(s.forward), g10(s.maturity), g10(s.discount));
    if s.extrapolation == Extrapolation::LinearVariance {
        out += "extrapolation = linear-variance\n";
    }
    out += "strike,vol\n";
    for (k, v) in &s.quotes {
        out += &format!("{},{}\n", g10(*k), g10(*v));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    #[default]
    Call,
    Put,
}

impl From<Kind> for OptionKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Call => OptionKind::Call,
            Kind::Put => OptionKind::Put,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for McSection {
    fn default() -> Self {
        let c = McConfig::default();
        Self {
            paths: c.paths,
            steps_per_year: c.steps_per_year,
            seed: c.seed,
            antithetic: c.antithetic,
        }
    }
}

impl From<McSection> for McConfig {
    fn from(m: McSection) -> Self {
        McConfig {
            paths: m.paths,
            steps_per_year: m.steps_per_year,
            seed: m.seed,
            antithetic: m.antithetic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnderlyingSection {
    pub spot: f64,
    pub atm_vol: f64,
    #[serde(default)]
    pub foreign_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptionSection {
    pub maturity: f64,
    pub domestic_rate: f64,
    /// Strikes as multiples of the first underlying's forward.
    pub moneyness: Vec<f64>,
    pub kind: Kind,
}

impl Default for OptionSection {
    fn default() -> Self {
        Self {
            maturity: 1.0,
            domestic_rate: 0.0,
            moneyness: vec![0.85],
            kind: Kind::Call,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    /// Any of LL, LR, RL, RR, SS: first letter for the asset, second for the
    /// FX rate; L is a left skew, R a right skew, S no skew.
    pub templates: Vec<String>,
    /// Magnitude of the vol slope per unit LMMR.
    pub skew: f64,
    pub correlations: Vec<f64>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            templates: ["LL", "LR", "RL", "RR", "SS"].map(String::from).to_vec(),
            skew: 0.13,
            correlations: vec![0.6, 0.3, 0.0, -0.3, -0.6],
        }
    }
}

/// Input of `scenario-gen`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub underlying1: UnderlyingSection,
    pub underlying2: UnderlyingSection,
    pub option: OptionSection,
    pub scenarios: ScenarioSection,
    pub mc: McSection,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            underlying1: UnderlyingSection {
                spot: 981.3,
                atm_vol: 0.09,
                foreign_rate: 0.0,
            },
            underlying2: UnderlyingSection {
                spot: 1.422,
                atm_vol: 0.09,
                foreign_rate: 0.0,
            },
            option: OptionSection::default(),
            scenarios: ScenarioSection::default(),
            mc: McSection::default(),
        }
    }
}

/// Slopes (asset, FX) of a template.
pub fn template_slopes(name: &str, skew: f64) -> Result<(f64, f64), CliError> {
    let one = |c: char| match c {
        'L' => Ok(-skew),
        'R' => Ok(skew),
        'S' => Ok(0.0),
        _ => Err(CliError::input(format!("unknown template {name}"))),
    };
    let c: Vec<char> = name.chars().collect();
    if c.len() != 2 || (c[0] == 'S') != (c[1] == 'S') {
        return Err(CliError::input(format!("unknown template {name}")));
    }
    Ok((one(c[0])?, one(c[1])?))
}

impl GenConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let c: GenConfig = toml::from_str(text).map_err(|e| CliError::input(e.to_string()))?;
        for t in &c.scenarios.templates {
            template_slopes(t, c.scenarios.skew)?;
        }
        if c.scenarios.templates.is_empty() || c.scenarios.correlations.is_empty() {
            return Err(CliError::input("need at least one template and one correlation"));
        }
        if c.option.moneyness.iter().any(|m| m.is_nan() || *m <= 0.0) {
            return Err(CliError::input("moneyness must be positive"));
        }
        McConfig::from(c.mc).validate()?;
        Ok(c)
    }
}

/// One generated scenario, stored as `scenario.toml` next to its surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub id: String,
    pub template: String,
    pub rho: f64,
    pub maturity: f64,
    pub discount: f64,
    pub kind: Kind,
    pub strikes: Vec<f64>,
    pub surface1: String,
    pub surface2: String,
    #[serde(default)]
    pub mc: McSection,
}

/// A scenario file with its surfaces loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub dir: PathBuf,
    pub surface1: VolSurface,
    pub surface2: VolSurface,
}

impl Scenario {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(SCENARIO_FILE);
        let file: ScenarioFile =
            toml::from_str(&read_text(&path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let surface1 = read_surface(&dir.join(&file.surface1))?;
        let surface2 = read_surface(&dir.join(&file.surface2))?;
        Ok(Self {
            file,
            dir: dir.to_path_buf(),
            surface1,
            surface2,
        })
    }

    pub fn input_paths(&self) -> [PathBuf; 3] {
        [
            self.dir.join(SCENARIO_FILE),
            self.dir.join(&self.file.surface1),
            self.dir.join(&self.file.surface2),
        ]
    }
}

/// Scenario directories under `path`: the path itself if it holds a scenario
/// file, otherwise its immediate subdirectories that do, sorted by name.
pub fn scenario_dirs(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.join(SCENARIO_FILE).is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|e| CliError::io(path, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(SCENARIO_FILE).is_file())
        .collect();
    if dirs.is_empty() {
        return Err(CliError::input(format!("{}: no scenarios found", path.display())));
    }
    dirs.sort();
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_round_trip() {
        let s = VolSurface::with_extrapolation(
            100.0,
            0.5,
            0.99,
            vec![(80.0, 0.25), (100.0, 0.2), (120.0, 0.18)],
            Extrapolation::LinearVariance,
        )
        .unwrap();
        let text = render_surface(&s, &RunManifest::new("test"));
        assert_eq!(parse_surface(&text).unwrap(), s);
    }

    #[test]
    fn surface_errors() {
        assert!(parse_surface("maturity = 1\nstrike,vol\n90,0.2\n110,0.2\n").is_err());
        assert!(parse_surface("forward = 100\nmaturity = 1\nstrike,vol\n90,x\n").is_err());
        assert!(parse_surface("forward = 100\nmaturity = 1\ncolour = 3\n").is_err());
        let s = parse_surface("forward = 100\nmaturity = 1\nstrike,vol\n90,0.2\n110,0.2\n").unwrap();
        assert_eq!(s.discount, 1.0);
        assert_eq!(s.extrapolation, Extrapolation::Flat);
    }

    #[test]
    fn templates() {
        assert_eq!(template_slopes("LR", 0.1).unwrap(), (-0.1, 0.1));
        assert_eq!(template_slopes("SS", 0.1).unwrap(), (0.0, 0.0));
        assert!(template_slopes("LS", 0.1).is_err());
        assert!(template_slopes("XX", 0.1).is_err());
    }

    #[test]
    fn config_defaults_and_errors() {
        let c = GenConfig::parse("").unwrap();
        assert_eq!(c.scenarios.templates.len() * c.scenarios.correlations.len(), 25);
        assert!(GenConfig::parse("[option]\nmaturity = 1\nbogus = 2\n").is_err());
        assert!(GenConfig::parse("[mc]\npaths = 10\n").is_err());
        let c = GenConfig::parse("[underlying1]\nspot = 50\natm_vol = 0.3\n").unwrap();
        assert_eq!(c.underlying1.spot, 50.0);
    }
}
