use std::path::{Path, PathBuf};

use chern_interferometer::analysis::{DetectOptions, SweepOptions};
use chern_interferometer::protocol::{PlanOptions, Site};
use chern_interferometer::sim::{CloudSpec, Mode, SimOptions};
use chern_interferometer::{Closure, ModelParams};
use serde::{Deserialize, Deserializer, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub protocol: ProtocolSection,
    pub simulation: SimulationSection,
    pub scan: ScanSection,
    pub oracle: OracleSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSection::default(),
            protocol: ProtocolSection::default(),
            simulation: SimulationSection::default(),
            scan: ScanSection::default(),
            oracle: OracleSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub t: f64,
    pub tprime: f64,
    /// Accepts a number or an expression such as `"pi/2"`.
    #[serde(deserialize_with = "de_angle")]
    pub phi: f64,
    pub a: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { t: 1.0, tprime: 0.1, phi: std::f64::consts::FRAC_PI_2, a: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub sites: Vec<Site>,
    pub leg_time: f64,
    pub echo: bool,
    pub swap_spins: bool,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection { sites: vec![Site::I, Site::II], leg_time: 200.0, echo: true, swap_spins: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub closure: Closure,
    pub zeeman_rate: f64,
    pub points_per_leg: usize,
    pub cloud_sigma: f64,
    pub cloud_samples: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            mode: Mode::Adiabatic,
            dt: None,
            closure: Closure::Geodesic,
            zeeman_rate: 0.0,
            points_per_leg: 2000,
            cloud_sigma: 0.0,
            cloud_samples: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub phi_mw_points: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection { phi_mw_points: 24 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    /// FHS grid size.
    pub grid: usize,
    /// Samples per segment of the band-structure path.
    pub band_points: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { grid: 60, band_points: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub radii: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { radii: vec![0.0, 0.1, 0.2, 0.4], trials: 100, seed: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Delimiter-separated data table.
    Dsv,
    /// Structured summary record.
    Record,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub format: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: None, format: Format::Record }
    }
}

fn de_angle<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Angle {
        Num(f64),
        Int(i64),
        Expr(String),
    }
    match Angle::deserialize(d)? {
        Angle::Num(x) => Ok(x),
        Angle::Int(x) => Ok(x as f64),
        Angle::Expr(s) => parse_angle(&s).map_err(serde::de::Error::custom),
    }
}

/// Parses `1.2`, `pi`, `-pi/2`, `3pi/4`, `3*pi/4` or `0.5*pi`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase().replace('π', "pi").replace(' ', "");
    if let Ok(x) = t.parse::<f64>() {
        return Ok(x);
    }
    let bad = || format!("cannot parse angle '{s}'");
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n.to_string(), d.parse::<f64>().map_err(|_| bad())?),
        None => (t.clone(), 1.0),
    };
    let coeff = num.strip_suffix("pi").ok_or_else(bad)?;
    let coeff = coeff.strip_suffix('*').unwrap_or(coeff);
    let c = match coeff {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse::<f64>().map_err(|_| bad())?,
    };
    if den == 0.0 {
        return Err(bad());
    }
    Ok(c * std::f64::consts::PI / den)
}

/// Command-line overrides; every field left unset keeps the file value.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Nearest-neighbour hopping.
    #[arg(long, global = true)]
    pub t: Option<f64>,
    /// Next-nearest-neighbour hopping.
    #[arg(long, global = true)]
    pub tprime: Option<f64>,
    /// Flux phase, e.g. `pi/2` or `-0.7`.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = parse_angle)]
    pub phi: Option<f64>,
    /// `I`, `II` or `both`.
    #[arg(long, global = true)]
    pub site: Option<String>,
    /// Duration of the force leg.
    #[arg(long, global = true)]
    pub leg_time: Option<f64>,
    /// Insert the spin-echo π pulse.
    #[arg(long, global = true, overrides_with = "no_echo")]
    pub echo: bool,
    /// Run without the echo pulse.
    #[arg(long, global = true, overrides_with = "echo")]
    pub no_echo: bool,
    /// Differential Zeeman rate between the spin states.
    #[arg(long, global = true)]
    pub zeeman_rate: Option<f64>,
    /// `adiabatic` or `tdse`.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// TDSE time step.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// `geodesic` or `sublattice`.
    #[arg(long, global = true)]
    pub closure: Option<String>,
    /// Path samples per leg.
    #[arg(long, global = true)]
    pub points_per_leg: Option<usize>,
    /// Number of closing-pulse phases in a fringe scan.
    #[arg(long, global = true)]
    pub phi_mw_points: Option<usize>,
    /// FHS grid size for the oracle.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Seed for the robustness sweep.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Trials per sweep radius.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Comma-separated endpoint-error radii.
    #[arg(long, global = true, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    /// Output directory; without it results go to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// File (or defaults) with `o` applied on top, validated.
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        let m = &mut c.model;
        if let Some(x) = o.t {
            m.t = x;
        }
        if let Some(x) = o.tprime {
            m.tprime = x;
        }
        if let Some(x) = o.phi {
            m.phi = x;
        }
        if let Some(s) = &o.site {
            c.protocol.sites = match s.as_str() {
                "both" | "all" => vec![Site::I, Site::II],
                one => vec![one.parse().map_err(|e: chern_interferometer::Error| CliError::Config(e.to_string()))?],
            };
        }
        if let Some(x) = o.leg_time {
            c.protocol.leg_time = x;
        }
        if o.echo {
            c.protocol.echo = true;
        }
        if o.no_echo {
            c.protocol.echo = false;
        }
        if let Some(x) = o.zeeman_rate {
            c.simulation.zeeman_rate = x;
        }
        if let Some(s) = &o.mode {
            c.simulation.mode = s.parse().map_err(|e: chern_interferometer::Error| CliError::Config(e.to_string()))?;
        }
        if let Some(x) = o.dt {
            c.simulation.dt = Some(x);
        }
        if let Some(s) = &o.closure {
            c.simulation.closure = s.parse().map_err(|e: chern_interferometer::Error| CliError::Config(e.to_string()))?;
        }
        if let Some(x) = o.points_per_leg {
            c.simulation.points_per_leg = x;
        }
        if let Some(x) = o.phi_mw_points {
            c.scan.phi_mw_points = x;
        }
        if let Some(x) = o.grid {
            c.oracle.grid = x;
        }
        if let Some(x) = o.seed {
            c.sweep.seed = x;
        }
        if let Some(x) = o.trials {
            c.sweep.trials = x;
        }
        if let Some(x) = &o.radii {
            c.sweep.radii = x.clone();
        }
        if let Some(x) = &o.out {
            c.output.dir = Some(x.clone());
        }
        if let Some(x) = o.format {
            c.output.format = x;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model_params()?;
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.protocol.sites.is_empty() {
            return bad("protocol.sites must not be empty");
        }
        if !(self.protocol.leg_time > 0.0) {
            return bad("protocol.leg_time must be positive");
        }
        if self.simulation.points_per_leg == 0 {
            return bad("simulation.points_per_leg must be positive");
        }
        if self.scan.phi_mw_points < 5 {
            return bad("scan.phi_mw_points must be at least 5");
        }
        if self.sweep.trials == 0 {
            return bad("sweep.trials must be at least 1");
        }
        if self.sweep.radii.iter().any(|r| !(*r >= 0.0)) {
            return bad("sweep.radii must be non-negative");
        }
        Ok(())
    }

    pub fn model_params(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::with_lattice(self.model.t, self.model.tprime, self.model.phi, self.model.a)?)
    }

    pub fn plan_options(&self) -> PlanOptions<f64> {
        PlanOptions { leg_time: self.protocol.leg_time, with_echo: self.protocol.echo, swap_spins: self.protocol.swap_spins }
    }

    pub fn sim_options(&self) -> SimOptions<f64> {
        let s = &self.simulation;
        SimOptions {
            mode: s.mode,
            closure: s.closure,
            zeeman_rate: s.zeeman_rate,
            points_per_leg: s.points_per_leg,
            dt: s.dt,
            cloud: (s.cloud_samples > 0 && s.cloud_sigma > 0.0).then_some(CloudSpec {
                sigma: s.cloud_sigma,
                samples: s.cloud_samples,
                seed: self.sweep.seed,
            }),
        }
    }

    pub fn detect_options(&self) -> DetectOptions<f64> {
        DetectOptions {
            plan: self.plan_options(),
            sim: self.sim_options(),
            phi_mw_points: self.scan.phi_mw_points,
            oracle_grid: Some(self.oracle.grid),
        }
    }

    pub fn sweep_options(&self) -> SweepOptions<f64> {
        SweepOptions {
            radii: self.sweep.radii.clone(),
            trials: self.sweep.trials,
            seed: self.sweep.seed,
            detect: self.detect_options(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn angles() {
        assert_eq!(parse_angle("pi/2").unwrap(), PI / 2.0);
        assert_eq!(parse_angle("-pi/2").unwrap(), -PI / 2.0);
        assert_eq!(parse_angle("3pi/4").unwrap(), 3.0 * PI / 4.0);
        assert_eq!(parse_angle("3*pi/4").unwrap(), 3.0 * PI / 4.0);
        assert_eq!(parse_angle("0.25").unwrap(), 0.25);
        assert_eq!(parse_angle("π").unwrap(), PI);
        assert!(parse_angle("pie").is_err());
        assert!(parse_angle("pi/0").is_err());
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut c = RunConfig::default();
        c.simulation.dt = Some(0.001);
        c.output.dir = Some("out".into());
        c.model.phi = -0.7;
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[model]\nfoo = 1\n").is_err());
        assert!(RunConfig::from_toml("[extra]\n").is_err());
    }

    #[test]
    fn angle_expressions_in_files() {
        let c = RunConfig::from_toml("[model]\nphi = \"-pi/2\"\n").unwrap();
        assert_eq!(c.model.phi, -PI / 2.0);
    }
}
