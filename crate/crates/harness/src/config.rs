//! Experiment configuration: TOML file merged over per-scenario defaults,
//! then command-line overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use mitopo_core::coil::{CoilSpec, ElectricalParams, MutualModel, Vec3, BOLTZMANN};
use mitopo_core::demodulation::{Approximation, BasisOptions, Fusion};
use mitopo_core::modulation::{Equalize, FrequencyPlan, PlanMode, PowerBudget, Scheme, TopologySymbol};
use mitopo_core::scene::{distance_prior, GeometrySample, MacScene};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

/// Trial count of a `--paper-scale` run.
pub const PAPER_SCALE_TRIALS: u64 = 4_000_000;

/// Desk-scale default trial count.
pub const DESK_TRIALS: u64 = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown scenario `{0}` (expected one of eigen_sweep, pilot_bound, blind_mc, power_sweep)")]
    UnknownScenario(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    EigenSweep,
    PilotBound,
    BlindMc,
    PowerSweep,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::EigenSweep,
        Scenario::PilotBound,
        Scenario::BlindMc,
        Scenario::PowerSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::EigenSweep => "eigen_sweep",
            Scenario::PilotBound => "pilot_bound",
            Scenario::BlindMc => "blind_mc",
            Scenario::PowerSweep => "power_sweep",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Scenario::EigenSweep => "eigenvalues of each symbol's mutual-inductance matrix versus distance",
            Scenario::PilotBound => "pilot-aided ML union bound (and optional Monte Carlo SER) versus distance and N0",
            Scenario::BlindMc => "blind detector Monte Carlo SER versus distance and N0",
            Scenario::PowerSweep => "transmit and load power per symbol versus distance",
        }
    }
}

impl FromStr for Scenario {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| ConfigError::UnknownScenario(s.to_string()))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    /// Transmitter grid side N.
    pub grid_side: usize,
    /// Gap between neighboring loops of a grid (m).
    pub grid_gap: f64,
    /// Active coil indices per pattern, 1-based row-major.
    pub patterns: Vec<Vec<usize>>,
    /// Unit directions from the receiver to each transmitter grid.
    pub directions: Vec<[f64; 3]>,
    /// Transmitter grid normal.
    pub tx_normal: [f64; 3],
    pub distances: Vec<f64>,
    pub scheme: Scheme,
    /// Collapse symbols that differ only in user order.
    pub merge_symmetric: bool,
    /// Trapezoidal nodes per loop for the Neumann integral.
    pub quadrature_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Resonance frequency f0 (Hz).
    pub f0: f64,
    pub resistance: f64,
    pub inductance: f64,
    pub radius: f64,
    pub wire_width: f64,
    /// Load impedance; defaults to the coil resistance.
    pub z_load: Option<f64>,
    /// Noise temperature for the thermal density 4 k_B T R (K).
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    /// Band edges as multiples of omega_0.
    pub band: [f64; 2],
    pub n_omega: usize,
    pub n_sets: usize,
    /// Frequency-set seed; derived from the master seed when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    /// Total power over the constellation (W).
    pub total_power: f64,
    pub equalize: Equalize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Prepend the thermal density 4 k_B T R to `n0`.
    pub thermal: bool,
    /// Additional noise densities (W/Hz).
    pub n0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlindConfig {
    pub prior_min: f64,
    pub prior_max: f64,
    pub prior_count: usize,
    pub approximation: Approximation,
    pub rank_tol: f64,
    pub merge_tol: f64,
    pub fusion: Fusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    /// Also run a Monte Carlo ML detector next to the bound.
    pub monte_carlo: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub master_seed: u64,
    pub trials: u64,
    /// Trials per seeded chunk; fixes the random streams independently of
    /// the worker count.
    pub chunk_size: u64,
    pub layout: LayoutConfig,
    pub physics: PhysicsConfig,
    pub plan: PlanConfig,
    pub budget: BudgetConfig,
    pub noise: NoiseConfig,
    pub blind: BlindConfig,
    pub pilot: PilotConfig,
}

impl ExperimentConfig {
    /// Table defaults with the scenario's frequency plan and power rule.
    pub fn defaults(scenario: Scenario) -> Self {
        let (f0, band, n_omega, n_sets, equalize) = match scenario {
            Scenario::BlindMc => (10e6, [0.92, 1.08], 24, 24, Equalize::Transmit),
            Scenario::PowerSweep => (1e6, [0.99, 1.01], 32, 1, Equalize::Transmit),
            Scenario::EigenSweep | Scenario::PilotBound => (1e6, [0.99, 1.01], 32, 1, Equalize::Received),
        };
        let distances = match scenario {
            Scenario::EigenSweep => vec![1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0],
            _ => (1..=10).map(f64::from).collect(),
        };
        Self {
            scenario,
            master_seed: 1,
            trials: DESK_TRIALS,
            chunk_size: 1000,
            layout: LayoutConfig {
                grid_side: 3,
                grid_gap: 1e-3,
                patterns: vec![vec![1, 2, 3, 4, 5], vec![1, 3, 7, 8, 9]],
                directions: vec![[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]],
                tx_normal: [0.0, 0.0, 1.0],
                distances,
                scheme: Scheme::Mod3,
                merge_symmetric: true,
                quadrature_nodes: MutualModel::default().nodes,
            },
            physics: PhysicsConfig {
                f0,
                resistance: 65e-3,
                inductance: 84e-9,
                radius: 0.01,
                wire_width: 2e-3,
                z_load: None,
                temperature: 300.0,
            },
            plan: PlanConfig {
                band,
                n_omega,
                n_sets,
                seed: None,
            },
            budget: BudgetConfig {
                total_power: 1e-3,
                equalize,
            },
            noise: NoiseConfig {
                thermal: true,
                n0: vec![1e-16, 1e-12],
            },
            blind: BlindConfig {
                prior_min: 1.0,
                prior_max: 10.0,
                prior_count: 10,
                approximation: Approximation::MeanField,
                rank_tol: 1e-8,
                merge_tol: 0.0,
                fusion: Fusion::Vote,
            },
            pilot: PilotConfig { monte_carlo: false },
        }
    }

    /// Parses `text` over the defaults of its `scenario` key (or of
    /// `fallback` when the key is absent), then applies `overrides`.
    pub fn from_toml(text: &str, fallback: Option<Scenario>, overrides: &[String]) -> Result<Self> {
        let user: Value = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let scenario = match user.get("scenario") {
            Some(Value::String(s)) => s.parse()?,
            Some(other) => return Err(ConfigError::Parse(format!("`scenario` must be a string, got {other}"))),
            None => fallback.ok_or_else(|| ConfigError::Parse("missing `scenario` key".into()))?,
        };
        let mut merged = Value::try_from(Self::defaults(scenario)).map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut merged, user, "")?;
        for o in overrides {
            apply_override(&mut merged, o)?;
        }
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, fallback: Option<Scenario>, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, fallback, overrides)
    }

    /// Defaults of `scenario` with `overrides` applied.
    pub fn from_defaults(scenario: Scenario, overrides: &[String]) -> Result<Self> {
        Self::from_toml(&format!("scenario = \"{}\"", scenario.name()), None, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.chunk_size == 0 {
            return bad("chunk_size must be >= 1".into());
        }
        if self.layout.distances.is_empty() {
            return bad("layout.distances must not be empty".into());
        }
        let min_d = 2.0 * self.physics.radius;
        if let Some(d) = self.layout.distances.iter().find(|&&d| !(d > min_d)) {
            return bad(format!("distance {d} must exceed the loop diameter {min_d}"));
        }
        if self.noise.n0.iter().any(|&n| !(n >= 0.0)) {
            return bad("noise densities must be >= 0".into());
        }
        if !self.noise.thermal && self.noise.n0.is_empty() {
            return bad("no noise level configured".into());
        }
        if !(self.budget.total_power > 0.0) {
            return bad("budget.total_power must be > 0".into());
        }
        if self.blind.prior_count == 0 || !(self.blind.prior_min > min_d) || self.blind.prior_max < self.blind.prior_min
        {
            return bad("blind prior needs count >= 1 and 2r < prior_min <= prior_max".into());
        }
        self.scene(self.layout.distances[0]).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.plan().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.layout.scheme != Scheme::Mod3 && self.scenario != Scenario::EigenSweep {
            return bad(format!(
                "scenario {} detects concurrent shared-set symbols; only scheme mod3 is supported",
                self.scenario
            ));
        }
        Ok(())
    }

    pub fn params(&self) -> mitopo_core::Result<ElectricalParams> {
        ElectricalParams::from_rl(self.physics.resistance, self.physics.inductance, self.physics.f0)
    }

    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.physics.f0
    }

    /// Noise densities in output order: thermal first when enabled.
    pub fn noise_levels(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.noise.n0.len() + 1);
        if self.noise.thermal {
            out.push(4.0 * BOLTZMANN * self.physics.temperature * self.physics.resistance);
        }
        out.extend(&self.noise.n0);
        out
    }

    pub fn plan(&self) -> FrequencyPlan {
        FrequencyPlan {
            mode: PlanMode::SharedSet,
            band: (self.plan.band[0], self.plan.band[1]),
            n_omega: self.plan.n_omega,
            n_sets: self.plan.n_sets,
            seed: self.plan.seed.unwrap_or(self.master_seed),
        }
    }

    pub fn budget(&self) -> PowerBudget {
        PowerBudget::new(self.budget.total_power, self.budget.equalize)
    }

    pub fn basis_options(&self) -> BasisOptions {
        BasisOptions {
            approximation: self.blind.approximation,
            rank_tol: self.blind.rank_tol,
            merge_tol: self.blind.merge_tol,
        }
    }

    pub fn prior(&self) -> mitopo_core::Result<Vec<GeometrySample>> {
        distance_prior(
            self.blind.prior_min,
            self.blind.prior_max,
            self.blind.prior_count,
            vec3(self.layout.tx_normal),
        )
    }

    pub fn scene(&self, distance: f64) -> mitopo_core::Result<MacScene> {
        let params = self.params()?;
        let mut spec = CoilSpec::reference(self.physics.f0);
        spec.radius = self.physics.radius;
        spec.wire_width = self.physics.wire_width;
        let patterns = self
            .layout
            .patterns
            .iter()
            .map(|p| TopologySymbol::new(p.clone(), self.layout.grid_side))
            .collect::<mitopo_core::Result<Vec<_>>>()?;
        let mut scene = MacScene::two_user(distance, self.physics.f0)?;
        scene.spec = spec;
        scene.params = params;
        scene.z_load = self.physics.z_load.unwrap_or(params.resistance);
        scene.grid_side = self.layout.grid_side;
        scene.delta_c = self.layout.grid_gap;
        scene.directions = self.layout.directions.iter().map(|&d| vec3(d)).collect();
        scene.tx_normal = vec3(self.layout.tx_normal);
        scene.patterns = patterns;
        scene.model = MutualModel::with_nodes(self.layout.quadrature_nodes);
        scene.validate()?;
        Ok(scene)
    }

    /// SHA-256 of the canonical JSON rendering of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config is serializable");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Recursive table merge; `user` keys must exist in `base`.
fn merge(base: &mut Value, user: Value, path: &str) -> Result<()> {
    match (base, user) {
        (Value::Table(b), Value::Table(u)) => {
            for (k, v) in u {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    // optional fields serialize to nothing
                    None if OPTIONAL_KEYS.contains(&key.as_str()) => {
                        b.insert(k, v);
                    }
                    None => return Err(ConfigError::Parse(format!("unknown field `{key}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

const OPTIONAL_KEYS: [&str; 2] = ["physics.z_load", "plan.seed"];

/// `key=value` with a dotted key path. `D` and `N0` are shorthands for a
/// single distance and a single non-thermal noise level.
fn apply_override(cfg: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    if key.is_empty() {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let value = parse_value(raw);
    let (path, value): (Vec<&str>, Value) = match key {
        "D" => (vec!["layout", "distances"], Value::Array(vec![as_float(value)])),
        "N0" => {
            set(cfg, &["noise", "thermal"], Value::Boolean(false), spec)?;
            (vec!["noise", "n0"], Value::Array(vec![as_float(value)]))
        }
        _ => (key.split('.').collect(), value),
    };
    set(cfg, &path, value, spec)
}

fn parse_value(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn as_float(v: Value) -> Value {
    match v {
        Value::Integer(i) => Value::Float(i as f64),
        other => other,
    }
}

fn set(cfg: &mut Value, path: &[&str], value: Value, spec: &str) -> Result<()> {
    let (last, parents) = path.split_last().ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let mut node = cfg;
    for p in parents {
        node = node
            .get_mut(*p)
            .ok_or_else(|| ConfigError::Parse(format!("override `{spec}`: unknown section `{p}`")))?;
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| ConfigError::Parse(format!("override `{spec}`: not a section")))?;
    let full = path.join(".");
    if !table.contains_key(*last) && !OPTIONAL_KEYS.contains(&full.as_str()) {
        return Err(ConfigError::Parse(format!("override `{spec}`: unknown field `{full}`")));
    }
    // integers where floats are expected would fail to deserialize
    let value = match (table.get(*last), value) {
        (Some(Value::Float(_)), Value::Integer(i)) => Value::Float(i as f64),
        (Some(Value::Array(a)), Value::Array(v)) if a.first().is_some_and(Value::is_float) => {
            Value::Array(v.into_iter().map(as_float).collect())
        }
        (_, v) => v,
    };
    table.insert(last.to_string(), value);
    Ok(())
}
