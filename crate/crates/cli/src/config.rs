//! The run configuration: one JSON document, every key optional except the
//! exchange strength, unknown keys rejected. Command-line flags override the
//! matching fields after the file is read.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tqd::{DotPair, DotSigmas, ExperimentSpec, GaugeMode, McConfig, QuadratureSpec, Representation, TimeGrid};

use crate::failure::Failure;
use crate::units::Units;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub sigmas: SigmasConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub times: TimesConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodName>,
    #[serde(default)]
    pub mc: McSettings,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub compare: CompareSettings,
}

fn default_methods() -> Vec<MethodName> {
    vec![MethodName::Exact]
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

/// Per-dot field deviations in units of σ_hf; defaults to `(0.5, 1, 1.5)`.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SigmasConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
}

impl Default for SigmasConfig {
    fn default() -> Self {
        SigmasConfig { sigma1: 0.5, sigma2: 1.0, sigma3: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_prepared")]
    pub prepared_pair: DotPair,
    #[serde(default = "default_pulsed")]
    pub pulsed_pair: DotPair,
    #[serde(default)]
    pub j: Option<f64>,
    #[serde(default)]
    pub gauge: GaugeMode,
}

fn default_prepared() -> DotPair {
    DotPair::P12
}

fn default_pulsed() -> DotPair {
    DotPair::P23
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            prepared_pair: DotPair::P12,
            pulsed_pair: DotPair::P23,
            j: None,
            gauge: GaugeMode::Both,
        }
    }
}

/// Either an explicit list or an inclusive linear grid, in 1/σ_hf.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum TimesConfig {
    List(Vec<f64>),
    Grid(LinearGrid),
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LinearGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Default for TimesConfig {
    fn default() -> Self {
        TimesConfig::Grid(LinearGrid { start: 0.0, stop: 10.0, count: 201 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Mc,
    Exact,
    InfJ,
    HighJ,
    LowJ,
    ZeroJ,
}

impl MethodName {
    pub fn column(self) -> &'static str {
        match self {
            MethodName::Mc => "p0_mc",
            MethodName::Exact => "p0_exact",
            MethodName::InfJ => "p0_inf_j",
            MethodName::HighJ => "p0_high_j",
            MethodName::LowJ => "p0_low_j",
            MethodName::ZeroJ => "p0_zero_j",
        }
    }

    pub fn label(self) -> &'static str {
        &self.column()[3..]
    }

    pub fn parse(s: &str) -> Result<Self, Failure> {
        serde_json::from_value(serde_json::Value::String(s.trim().to_string())).map_err(|_| {
            Failure::usage(format!(
                "unknown method '{s}' (expected mc, exact, inf_j, high_j, low_j, zero_j)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    #[serde(default = "default_samples")]
    pub n_samples: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub representation: Representation,
}

fn default_samples() -> u64 {
    20_000
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings { n_samples: default_samples(), seed: 0, representation: Representation::Full8 }
    }
}

/// Pass/fail settings for `compare`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSettings {
    /// Max-abs tolerance for deterministic pairs without an explicit entry.
    #[serde(default = "default_tolerance")]
    pub default_tolerance: f64,
    /// Overrides keyed `"a:b"` with method labels, e.g. `"exact:inf_j"`.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Pairs involving Monte Carlo pass when every point lies within this
    /// many standard errors.
    #[serde(default = "default_band")]
    pub mc_band: f64,
}

fn default_tolerance() -> f64 {
    0.02
}

fn default_band() -> f64 {
    3.0
}

impl Default for CompareSettings {
    fn default() -> Self {
        CompareSettings {
            default_tolerance: default_tolerance(),
            tolerances: BTreeMap::new(),
            mc_band: default_band(),
        }
    }
}

impl CompareSettings {
    pub fn tolerance(&self, a: MethodName, b: MethodName) -> f64 {
        let forward = format!("{}:{}", a.label(), b.label());
        let backward = format!("{}:{}", b.label(), a.label());
        self.tolerances
            .get(&forward)
            .or_else(|| self.tolerances.get(&backward))
            .copied()
            .unwrap_or(self.default_tolerance)
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub methods: Option<Vec<MethodName>>,
    pub units: Option<Units>,
    pub workers: Option<usize>,
    pub j: Option<f64>,
    pub samples: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            Failure::config(format!("invalid config {}: {e}", path.display()))
                .with_context(serde_json::json!({ "line": e.line(), "column": e.column() }))
        })
    }

    pub fn apply(mut self, o: Overrides) -> Self {
        if o.out.is_some() {
            self.out = o.out;
        }
        if let Some(seed) = o.seed {
            self.mc.seed = seed;
        }
        if let Some(m) = o.methods {
            self.methods = m;
        }
        if let Some(u) = o.units {
            self.units = u;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        if o.j.is_some() {
            self.experiment.j = o.j;
        }
        if let Some(n) = o.samples {
            self.mc.n_samples = n;
        }
        self
    }

    pub fn sigmas(&self) -> Result<DotSigmas, Failure> {
        Ok(DotSigmas::new(self.sigmas.sigma1, self.sigmas.sigma2, self.sigmas.sigma3)?)
    }

    pub fn experiment(&self) -> Result<ExperimentSpec, Failure> {
        let j = self
            .experiment
            .j
            .ok_or_else(|| Failure::config("experiment.j is required (config or --j)"))?;
        let times = match &self.times {
            TimesConfig::List(v) => TimeGrid::new(v.clone())?,
            TimesConfig::Grid(g) => TimeGrid::linspace(g.start, g.stop, g.count)?,
        };
        let spec = ExperimentSpec {
            prepared_pair: self.experiment.prepared_pair,
            pulsed_pair: self.experiment.pulsed_pair,
            j,
            times,
            gauge: self.experiment.gauge,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            n_samples: self.mc.n_samples,
            seed: self.mc.seed,
            rep: self.mc.representation,
            mirror: false,
        }
    }

    pub fn validate_methods(&self) -> Result<(), Failure> {
        if self.methods.is_empty() {
            return Err(Failure::config("at least one method is required"));
        }
        let mut sorted = self.methods.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.methods.len() {
            return Err(Failure::config("methods list contains duplicates"));
        }
        if let Some(0) = self.workers {
            return Err(Failure::config("workers must be >= 1"));
        }
        self.quadrature.validate()?;
        Ok(())
    }
}
