use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use eternal_core::operator::TimeDependence;
use eternal_core::{build_grid, validate, CoefficientSpec, Expr, Grid, Scheme, SourceSpec, SpatialDomain};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// A configuration problem. Maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Eternal,
    Rates,
    Comparison,
    Contraction,
    MaxPrinciple,
    Exhaustion,
    Decompose,
    Suite,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Eternal => "eternal",
            Kind::Rates => "rates",
            Kind::Comparison => "comparison",
            Kind::Contraction => "contraction",
            Kind::MaxPrinciple => "max_principle",
            Kind::Exhaustion => "exhaustion",
            Kind::Decompose => "decompose",
            Kind::Suite => "suite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Interval([Expr; 2]),
    Polygon(Vec<[Expr; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub route_agreement: f64,
    pub rate: f64,
    pub decay: f64,
    pub comparison: f64,
    pub decomposition: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            route_agreement: 1e-6,
            rate: 1e-2,
            decay: 0.02,
            comparison: 1e-5,
            decomposition: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// `[t_start, t_end]`; each kind has its own default.
    pub window: Option<[f64; 2]>,
    pub t_back: f64,
    pub max_t_back: f64,
    pub eigen_tol: f64,
    pub floquet_tol: f64,
    pub j_max: usize,
    pub horizon: Option<usize>,
    /// Initial slice for the contraction experiment; a seeded random
    /// positive slice when absent.
    pub initial: Option<Expr>,
    pub n_list: Option<Vec<f64>>,
    pub half_width: Option<f64>,
    /// Coefficient of `w` in the decomposition round trip; drawn from the
    /// seed when absent.
    pub a: Option<f64>,
    pub split: f64,
    pub csv_stride: usize,
    pub tolerances: Tolerances,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            window: None,
            t_back: 20.0,
            max_t_back: 80.0,
            eigen_tol: 1e-12,
            floquet_tol: 1e-10,
            j_max: 4,
            horizon: None,
            initial: None,
            n_list: None,
            half_width: None,
            a: None,
            split: 0.0,
            csv_stride: 100,
            tolerances: Tolerances::default(),
        }
    }
}

/// Tolerances used by `regress` when comparing runs of this config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressTolerances {
    pub rel: f64,
    pub abs: f64,
    /// Relative tolerance per field, matched against the end of the field
    /// path (for example `DecayReport.delta`).
    pub fields: BTreeMap<String, f64>,
}

impl Default for RegressTolerances {
    fn default() -> Self {
        Self {
            rel: 1e-9,
            abs: 1e-12,
            fields: BTreeMap::new(),
        }
    }
}

impl RegressTolerances {
    pub fn for_path(&self, path: &str) -> (f64, f64) {
        let rel = self
            .fields
            .iter()
            .filter(|(k, _)| path.ends_with(k.as_str()))
            .max_by_key(|(k, _)| k.len())
            .map_or(self.rel, |(_, &v)| v);
        (rel, self.abs)
    }
}

fn zero_expr() -> Expr {
    Expr::constant(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub domain: DomainConfig,
    pub h: Expr,
    pub coefficients: CoefficientSpec,
    #[serde(default = "zero_expr")]
    pub source: Expr,
    #[serde(default)]
    pub scheme: Scheme,
    pub dt: Expr,
    pub kind: Kind,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub regress: RegressTolerances,
}

/// A validated config with its grid built.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub name: String,
    pub grid: Arc<Grid>,
    pub spec: CoefficientSpec,
    pub source: SourceSpec,
    pub h: f64,
    pub dt: f64,
    pub hash: String,
}

fn constant(e: &Expr, what: &str) -> Result<f64, ConfigError> {
    let v = e.as_constant().ok_or_else(|| config_err(format!("{what} must be a constant expression")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(config_err(format!("{what} is not finite")))
    }
}

/// SHA-256 of the canonical JSON form of the config, excluding `out_dir`.
pub fn config_hash(raw: &Value) -> String {
    let mut v = raw.clone();
    if let Value::Object(m) = &mut v {
        m.remove("out_dir");
    }
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

pub fn load(path: &Path) -> Result<Prepared, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment"))
}

pub fn parse(text: &str, default_name: &str) -> Result<Prepared, ConfigError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| config_err(format!("invalid JSON: {e}")))?;
    let config: ExperimentConfig = serde_json::from_value(raw.clone()).map_err(|e| config_err(e.to_string()))?;
    let hash = config_hash(&raw);
    prepare(config, hash, default_name)
}

fn positive(v: f64, what: &str) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{what} must be positive, got {v}")))
    }
}

/// Windows each kind samples by default.
pub fn default_window(kind: Kind, params: &Params) -> [f64; 2] {
    match kind {
        Kind::Rates => [-5.0, 5.0],
        Kind::MaxPrinciple => [0.0, 4.0],
        Kind::Contraction => {
            let horizon = horizon(params);
            [0.0, (2 * horizon - params.j_max) as f64]
        }
        _ => [-1.0, 3.0],
    }
}

pub fn horizon(params: &Params) -> usize {
    params
        .horizon
        .unwrap_or(params.j_max + eternal_core::verify::DEFAULT_TAIL)
}

fn prepare(config: ExperimentConfig, hash: String, default_name: &str) -> Result<Prepared, ConfigError> {
    let h = constant(&config.h, "h")?;
    let dt = constant(&config.dt, "dt")?;
    positive(h, "h")?;
    positive(dt, "dt")?;
    let p = &config.params;
    let t = &p.tolerances;
    for (v, what) in [
        (t.route_agreement, "tolerances.route_agreement"),
        (t.rate, "tolerances.rate"),
        (t.decay, "tolerances.decay"),
        (t.comparison, "tolerances.comparison"),
        (t.decomposition, "tolerances.decomposition"),
        (p.eigen_tol, "eigen_tol"),
        (p.floquet_tol, "floquet_tol"),
        (p.t_back, "t_back"),
        (config.regress.rel, "regress.rel"),
        (config.regress.abs, "regress.abs"),
    ] {
        positive(v, what)?;
    }
    if p.max_t_back < p.t_back {
        return Err(config_err("max_t_back must be at least t_back"));
    }
    if p.csv_stride == 0 {
        return Err(config_err("csv_stride must be at least 1"));
    }
    if p.j_max == 0 || horizon(p) < p.j_max + 2 {
        return Err(config_err("contraction needs j_max >= 1 and horizon >= j_max + 2"));
    }
    if let Some([a, b]) = p.window {
        if !(a < b) {
            return Err(config_err(format!("window [{a}, {b}] is empty")));
        }
    }
    let needs_truncation = matches!(config.kind, Kind::Exhaustion | Kind::Decompose);
    if needs_truncation && p.n_list.is_none() {
        return Err(config_err(format!("kind {} requires params.n_list", config.kind.name())));
    }
    if let Some(n) = &p.n_list {
        if n.len() < 2 || n.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config_err("n_list needs at least two strictly increasing values"));
        }
        let w = p.half_width.unwrap_or(n[0] / 2.0);
        if !(w > 0.0) || n[0] < 2.0 * w {
            return Err(config_err(format!("half_width {w} must be positive and at most n_list[0] / 2")));
        }
    }

    let domain = match &config.domain {
        DomainConfig::Interval([lo, hi]) => SpatialDomain::interval(constant(lo, "domain")?, constant(hi, "domain")?),
        DomainConfig::Polygon(v) => {
            let vertices = v
                .iter()
                .map(|[x, y]| Ok([constant(x, "domain")?, constant(y, "domain")?]))
                .collect::<Result<Vec<_>, ConfigError>>()?;
            SpatialDomain::polygon(vertices)
        }
    }
    .map_err(|e| config_err(e.to_string()))?;
    let grid = Arc::new(build_grid(&domain, h).map_err(|e| config_err(e.to_string()))?);

    let spec = config.coefficients.clone();
    let times = validation_times(&spec, &config);
    validate(&spec, &grid, &times).map_err(|e| config_err(e.to_string()))?;

    let name = config.name.clone().unwrap_or_else(|| default_name.to_string());
    Ok(Prepared {
        source: SourceSpec::new(config.source.clone()),
        name,
        grid,
        spec,
        h,
        dt,
        hash,
        config,
    })
}

fn validation_times(spec: &CoefficientSpec, config: &ExperimentConfig) -> Vec<f64> {
    let (a, b) = match spec.time_dependence() {
        TimeDependence::Autonomous => return vec![0.0],
        TimeDependence::Periodic { period } => (0.0, period),
        TimeDependence::General => {
            let [a, b] = config.params.window.unwrap_or([-5.0, 16.0]);
            (a - config.params.t_back, b)
        }
    };
    let n = 64;
    (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
}

/// JSON Schema of the config file.
pub fn schema() -> Value {
    let expr = json!({
        "description": "expression in y1, y2 (y = y1), t, pi; + - * / with sin, cos, exp, abs; or a number",
        "type": ["string", "number"]
    });
    let pos = json!({"type": "number", "exclusiveMinimum": 0});
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "ExperimentConfig",
        "type": "object",
        "required": ["domain", "h", "coefficients", "dt", "kind"],
        "additionalProperties": false,
        "properties": {
            "name": {"type": "string"},
            "domain": {
                "oneOf": [
                    {"type": "object", "required": ["interval"], "additionalProperties": false,
                     "properties": {"interval": {"type": "array", "items": expr, "minItems": 2, "maxItems": 2}}},
                    {"type": "object", "required": ["polygon"], "additionalProperties": false,
                     "properties": {"polygon": {"type": "array", "minItems": 4,
                        "items": {"type": "array", "items": expr, "minItems": 2, "maxItems": 2}}}}
                ]
            },
            "h": expr,
            "coefficients": {
                "type": "object",
                "required": ["a", "b", "c", "lambda", "Lambda"],
                "properties": {
                    "a": {"type": "array", "items": {"type": "array", "items": expr}},
                    "b": {"type": "array", "items": expr},
                    "c": expr,
                    "lambda": pos,
                    "Lambda": pos,
                    "form": {"enum": ["nondivergence", "divergence"]},
                    "period": pos
                }
            },
            "source": expr,
            "scheme": {"enum": ["implicit_euler", "crank_nicolson"]},
            "dt": expr,
            "kind": {"enum": ["eternal", "rates", "comparison", "contraction", "max_principle", "exhaustion", "decompose", "suite"]},
            "params": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "window": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                    "t_back": pos,
                    "max_t_back": pos,
                    "eigen_tol": pos,
                    "floquet_tol": pos,
                    "j_max": {"type": "integer", "minimum": 1},
                    "horizon": {"type": "integer", "minimum": 3},
                    "initial": expr,
                    "n_list": {"type": "array", "items": pos, "minItems": 2},
                    "half_width": pos,
                    "a": {"type": "number", "minimum": 0},
                    "split": {"type": "number"},
                    "csv_stride": {"type": "integer", "minimum": 1},
                    "tolerances": {
                        "type": "object",
                        "additionalProperties": false,
                        "properties": {
                            "route_agreement": pos, "rate": pos, "decay": pos,
                            "comparison": pos, "decomposition": pos
                        }
                    }
                }
            },
            "out_dir": {"type": "string"},
            "seed": {"type": "integer", "minimum": 0},
            "regress": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "rel": pos,
                    "abs": pos,
                    "fields": {"type": "object", "additionalProperties": pos}
                }
            }
        }
    })
}
