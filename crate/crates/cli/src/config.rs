//! Scenario files: a JSON document with a schema version, a command, the
//! seven model constants and command-specific options.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use bazykin::Params;

pub const SCHEMA_VERSION: u32 = 1;

/// A config error, reported as `CONFIG_INVALID` with the offending field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CONFIG_INVALID: {}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Equilibria,
    SimulateOde,
    CanardScan,
    HopfCurve,
    FoldCurve,
    Domain,
    Dispersion,
    TuringCurve,
    SimulatePde,
    TransientScan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsCfg {
    pub nu: f64,
    pub chi: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub delta: f64,
    pub eps: f64,
}

impl ParamsCfg {
    pub fn to_params(self) -> Params {
        Params { nu: self.nu, chi: self.chi, alpha: self.alpha, beta: self.beta, eta: self.eta, delta: self.delta, eps: self.eps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    command: Command,
    params: ParamsCfg,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    options: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriaOpts {}

impl Default for EquilibriaOpts {
    fn default() -> Self {
        EquilibriaOpts {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateOdeOpts {
    pub t_end: f64,
    /// Initial states as multiples of `(u*, v*)`.
    pub ics: Vec<[f64; 2]>,
    /// Values of `delta` to run in turn; empty means the one in `params`.
    pub deltas: Vec<f64>,
    pub rtol: f64,
    pub atol: f64,
    /// Keep the trajectory from this time on.
    pub t_keep: f64,
}

impl Default for SimulateOdeOpts {
    fn default() -> Self {
        SimulateOdeOpts { t_end: 200.0, ics: vec![[1.02, 1.0]], deltas: Vec::new(), rtol: 1e-8, atol: 1e-10, t_keep: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreeParamCfg {
    Chi,
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CanardScanOpts {
    pub free: FreeParamCfg,
    pub range: [f64; 2],
    pub samples: usize,
    pub horizon: f64,
    pub resolution: f64,
    pub convergence_tol: f64,
}

impl Default for CanardScanOpts {
    fn default() -> Self {
        CanardScanOpts { free: FreeParamCfg::Delta, range: [0.1443, 0.1445], samples: 11, horizon: 10_000.0, resolution: 1e-9, convergence_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveOpts {
    pub chi_range: [f64; 2],
    pub samples: usize,
    /// Values of `eps` to trace; empty means the one in `params`.
    pub eps_values: Vec<f64>,
    /// Add the fold curve to a Hopf trace, or the Hopf curves to a fold trace.
    pub overlay: bool,
    pub generalized_hopf: bool,
    /// `delta` values at which to locate the saddle-node of cycles in `chi`.
    pub snlc_deltas: Vec<f64>,
    /// Half-width of the `chi` window searched beyond the upper Hopf branch.
    pub snlc_window: f64,
}

impl Default for CurveOpts {
    fn default() -> Self {
        CurveOpts {
            chi_range: [3.5, 13.0],
            samples: 40,
            eps_values: Vec::new(),
            overlay: false,
            generalized_hopf: false,
            snlc_deltas: Vec::new(),
            snlc_window: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainOpts {
    pub horizon: f64,
    /// Extra `(chi, delta)` points; empty means the point in `params`.
    pub points: Vec<[f64; 2]>,
}

impl Default for DomainOpts {
    fn default() -> Self {
        DomainOpts { horizon: 10_000.0, points: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionOpts {
    pub d: f64,
    pub length: f64,
    pub k2_max: f64,
    pub samples: usize,
}

impl Default for DispersionOpts {
    fn default() -> Self {
        DispersionOpts { d: 25.0, length: 100.0, k2_max: 1.0, samples: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuringCurveOpts {
    pub delta_range: [f64; 2],
    pub samples: usize,
    pub length: f64,
    /// Inclusive mode range for the per-mode boundaries; `[0, 0]` skips them.
    pub modes: [u32; 2],
    /// Values of `eps` for the critical curve; empty means the one in `params`.
    pub eps_values: Vec<f64>,
}

impl Default for TuringCurveOpts {
    fn default() -> Self {
        TuringCurveOpts { delta_range: [0.128, 0.14], samples: 49, length: 100.0, modes: [13, 20], eps_values: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcCfg {
    LocalizedBump,
    SmallRandom,
    HomogeneousOffset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeCfg {
    Imex,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatePdeOpts {
    pub d: f64,
    pub length: f64,
    pub dx: f64,
    /// Zero selects the default for `eps`.
    pub dt: f64,
    pub t_end: f64,
    pub ic: IcCfg,
    pub magnitude: f64,
    pub scheme: SchemeCfg,
    /// Time between stored snapshots.
    pub snapshot_every: f64,
    pub steady_tol: f64,
    pub steady_window: usize,
}

impl Default for SimulatePdeOpts {
    fn default() -> Self {
        SimulatePdeOpts {
            d: 25.0,
            length: 100.0,
            dx: 0.25,
            dt: 0.0,
            t_end: 1000.0,
            ic: IcCfg::SmallRandom,
            magnitude: 1e-3,
            scheme: SchemeCfg::Imex,
            snapshot_every: 10.0,
            steady_tol: 1e-4,
            steady_window: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransientScanOpts {
    /// Explicit `d` values; empty means `samples` points spread over `d_range`.
    pub d_values: Vec<f64>,
    pub d_range: [f64; 2],
    pub samples: usize,
    /// Reference value for the distance; zero selects the critical diffusion.
    pub d_ref: f64,
    pub length: f64,
    pub dx: f64,
    pub t_end: f64,
    pub tol: f64,
    /// Distances included in the power-law fit; `[0, 0]` uses all settled rows.
    pub fit_d_range: [f64; 2],
}

impl Default for TransientScanOpts {
    fn default() -> Self {
        TransientScanOpts {
            d_values: Vec::new(),
            d_range: [6.7, 15.0],
            samples: 12,
            d_ref: 0.0,
            length: 200.0,
            dx: 0.25,
            t_end: 4000.0,
            tol: 0.2,
            fit_d_range: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "command", content = "options", rename_all = "kebab-case")]
pub enum Options {
    Equilibria(EquilibriaOpts),
    SimulateOde(SimulateOdeOpts),
    CanardScan(CanardScanOpts),
    HopfCurve(CurveOpts),
    FoldCurve(CurveOpts),
    Domain(DomainOpts),
    Dispersion(DispersionOpts),
    TuringCurve(TuringCurveOpts),
    SimulatePde(SimulatePdeOpts),
    TransientScan(TransientScanOpts),
}

/// A validated scenario with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub params: ParamsCfg,
    pub seed: u64,
    #[serde(flatten)]
    pub options: Options,
}

fn from_value<T: DeserializeOwned>(v: Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let mut path = e.path().to_string();
        let inner = e.into_inner().to_string();
        // Missing fields are reported against the parent object.
        if let Some(rest) = inner.strip_prefix("missing field `") {
            let field = rest.split('`').next().unwrap_or_default();
            path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
        }
        let full = match (prefix.is_empty(), path.as_str()) {
            (true, p) => p.to_string(),
            (false, ".") => prefix.to_string(),
            (false, p) => format!("{prefix}.{p}"),
        };
        invalid(full, inner)
    })
}

fn opts<T: DeserializeOwned + Default>(v: Value) -> Result<T, ConfigError> {
    if v.is_null() {
        return Ok(T::default());
    }
    from_value(v, "options")
}

fn check_range(path: &str, r: [f64; 2]) -> Result<(), ConfigError> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
        return Err(invalid(path, format!("range must be finite and increasing, got [{}, {}]", r[0], r[1])));
    }
    Ok(())
}

fn check_positive(path: &str, x: f64) -> Result<(), ConfigError> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(path, format!("must be positive, got {x}")));
    }
    Ok(())
}

fn check_count(path: &str, n: usize, min: usize) -> Result<(), ConfigError> {
    if n < min {
        return Err(invalid(path, format!("must be at least {min}, got {n}")));
    }
    Ok(())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| invalid("$", format!("not valid JSON: {e}")))?;
        let raw: RawScenario = from_value(value, "")?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", raw.schema_version)));
        }
        raw.params.to_params().validate().map_err(|e| invalid("params", e.to_string()))?;
        let o = raw.options;
        let options = match raw.command {
            Command::Equilibria => Options::Equilibria(opts(o)?),
            Command::SimulateOde => Options::SimulateOde(opts(o)?),
            Command::CanardScan => Options::CanardScan(opts(o)?),
            Command::HopfCurve => Options::HopfCurve(opts(o)?),
            Command::FoldCurve => Options::FoldCurve(opts(o)?),
            Command::Domain => Options::Domain(opts(o)?),
            Command::Dispersion => Options::Dispersion(opts(o)?),
            Command::TuringCurve => Options::TuringCurve(opts(o)?),
            Command::SimulatePde => Options::SimulatePde(opts(o)?),
            Command::TransientScan => Options::TransientScan(opts(o)?),
        };
        let sc = Scenario { schema_version: raw.schema_version, params: raw.params, seed: raw.seed, options };
        sc.check()?;
        Ok(sc)
    }

    pub fn params(&self) -> Params {
        self.params.to_params()
    }

    fn check(&self) -> Result<(), ConfigError> {
        match &self.options {
            Options::Equilibria(_) => {}
            Options::SimulateOde(o) => {
                check_positive("options.t_end", o.t_end)?;
                check_positive("options.rtol", o.rtol)?;
                check_positive("options.atol", o.atol)?;
                if o.ics.is_empty() {
                    return Err(invalid("options.ics", "need at least one initial state"));
                }
                if !(o.t_keep >= 0.0 && o.t_keep < o.t_end) {
                    return Err(invalid("options.t_keep", "must lie in [0, t_end)"));
                }
            }
            Options::CanardScan(o) => {
                check_range("options.range", o.range)?;
                check_count("options.samples", o.samples, 2)?;
                check_positive("options.horizon", o.horizon)?;
                check_positive("options.resolution", o.resolution)?;
                check_positive("options.convergence_tol", o.convergence_tol)?;
            }
            Options::HopfCurve(o) | Options::FoldCurve(o) => {
                check_range("options.chi_range", o.chi_range)?;
                check_count("options.samples", o.samples, 2)?;
                check_positive("options.snlc_window", o.snlc_window)?;
            }
            Options::Domain(o) => check_positive("options.horizon", o.horizon)?,
            Options::Dispersion(o) => {
                check_positive("options.d", o.d)?;
                check_positive("options.length", o.length)?;
                check_positive("options.k2_max", o.k2_max)?;
                check_count("options.samples", o.samples, 2)?;
            }
            Options::TuringCurve(o) => {
                check_range("options.delta_range", o.delta_range)?;
                check_count("options.samples", o.samples, 2)?;
                check_positive("options.length", o.length)?;
                if o.modes[0] > o.modes[1] {
                    return Err(invalid("options.modes", "first mode exceeds last"));
                }
            }
            Options::SimulatePde(o) => {
                check_positive("options.d", o.d)?;
                check_positive("options.length", o.length)?;
                check_positive("options.dx", o.dx)?;
                check_positive("options.t_end", o.t_end)?;
                check_positive("options.snapshot_every", o.snapshot_every)?;
                check_positive("options.steady_tol", o.steady_tol)?;
                check_count("options.steady_window", o.steady_window, 2)?;
                if o.dt < 0.0 {
                    return Err(invalid("options.dt", "must be >= 0"));
                }
            }
            Options::TransientScan(o) => {
                if o.d_values.is_empty() {
                    check_range("options.d_range", o.d_range)?;
                    check_count("options.samples", o.samples, 2)?;
                }
                check_positive("options.length", o.length)?;
                check_positive("options.dx", o.dx)?;
                check_positive("options.t_end", o.t_end)?;
                check_positive("options.tol", o.tol)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"schema_version": 1, "command": "equilibria",
        "params": {"nu": 10, "chi": 6, "alpha": 1, "beta": 2.85, "eta": 1, "delta": 0.11, "eps": 1}}"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let sc = Scenario::from_json(BASE).unwrap();
        assert_eq!(sc.options, Options::Equilibria(EquilibriaOpts {}));
        assert_eq!(sc.seed, 0);
    }

    #[test]
    fn missing_param_named_by_path() {
        let text = BASE.replace(r#""beta": 2.85, "#, "");
        let err = Scenario::from_json(&text).unwrap_err();
        assert_eq!(err.path, "params.beta");
    }

    #[test]
    fn unknown_option_named_by_path() {
        let text = BASE.replace("\"equilibria\"", "\"dispersion\"").replace("}}", r#"}, "options": {"d": 3, "lenght": 2}}"#);
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.path.starts_with("options"), "{err}");
        assert!(err.message.contains("lenght"));
    }

    #[test]
    fn wrong_type_named_by_path() {
        let text = BASE.replace("\"equilibria\"", "\"simulate-pde\"").replace("}}", r#"}, "options": {"d": "big"}}"#);
        assert_eq!(Scenario::from_json(&text).unwrap_err().path, "options.d");
    }

    #[test]
    fn semantic_checks() {
        let text = BASE.replace("\"equilibria\"", "\"hopf-curve\"").replace("}}", r#"}, "options": {"chi_range": [5, 4]}}"#);
        assert_eq!(Scenario::from_json(&text).unwrap_err().path, "options.chi_range");
        let text = BASE.replace("\"chi\": 6", "\"chi\": -6");
        assert_eq!(Scenario::from_json(&text).unwrap_err().path, "params");
        let text = BASE.replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert_eq!(Scenario::from_json(&text).unwrap_err().path, "schema_version");
    }

    #[test]
    fn resolved_config_round_trips_command() {
        let sc = Scenario::from_json(BASE).unwrap();
        let v = serde_json::to_value(&sc).unwrap();
        assert_eq!(v["command"], "equilibria");
        assert_eq!(v["params"]["beta"], 2.85);
    }
}
