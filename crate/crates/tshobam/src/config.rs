//! Experiment configuration: JSON documents whose numeric coefficients are
//! expression strings in the variable `t`, plus the builders that turn a
//! document into a [`TimeScale`], a [`NetworkSpec`], and initial histories.
//!
//! A document has five blocks. `timescale` picks the scale kind and its
//! geometry; `network` holds layer sizes, every coefficient family, the
//! activation, and the working radius `r`; `delays` holds the six delay
//! families and their common bound `theta`; `analysis` pins the scan window,
//! scan density, and solver/certificate knobs; `run` holds the horizon,
//! optional explicit initial histories, and the seed for randomized ones.
//! Parse failures carry the path of the offending field.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::exprlang::{parse, Expr, ExprError};
use crate::model::{ActivationSpec, DelaySpec, NetworkSpec};
use crate::simulate::{history_from_exprs, initial_history_window, SimError, Trajectory};
use crate::timescale::TimeScale;

/// Relative kernel weight below which the solution operator's infinite
/// lower integration limit is truncated; the default cutoff depth is
/// `ln(1/KERNEL_TAIL_TOLERANCE)` divided by the slowest decay rate.
pub const KERNEL_TAIL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field}: {source}")]
    Expr {
        field: String,
        #[source]
        source: ExprError,
    },
    #[error("{field}: {what}")]
    Value { field: String, what: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Top-level configuration document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub timescale: TimescaleBlock,
    pub network: NetworkBlock,
    pub delays: DelaysBlock,
    pub analysis: AnalysisBlock,
    pub run: RunBlock,
}

/// Scale kind and geometry. `kind` is `continuum`, `uniform_grid`, or
/// `periodic_union`; the other fields are required per kind.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimescaleBlock {
    pub kind: String,
    /// Grid step (`uniform_grid`).
    pub step: Option<f64>,
    /// Closed-segment length (`periodic_union`).
    pub on_length: Option<f64>,
    /// Gap between segments (`periodic_union`).
    pub gap: Option<f64>,
    /// Start of the anchor segment (`periodic_union`); 0 when omitted.
    pub anchor: Option<f64>,
    /// Dense-segment sampling density (`continuum`, `periodic_union`).
    pub resolution: Option<f64>,
}

/// Layer sizes, coefficient families as expression strings, activation
/// metadata, and the working radius.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkBlock {
    pub n: usize,
    pub m: usize,
    pub alpha: Vec<String>,
    pub c: Vec<String>,
    pub d: Vec<Vec<String>>,
    pub d_tau: Vec<Vec<String>>,
    pub d_bar: Vec<Vec<String>>,
    pub d_tilde: Vec<Vec<String>>,
    pub e: Vec<Vec<String>>,
    pub e_tau: Vec<Vec<String>>,
    pub e_bar: Vec<Vec<String>>,
    pub e_tilde: Vec<Vec<String>>,
    pub t2: Vec<Vec<Vec<String>>>,
    pub t2_bar: Vec<Vec<Vec<String>>>,
    pub input_x: Vec<String>,
    pub input_y: Vec<String>,
    pub activation: ActivationBlock,
    pub r: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationBlock {
    pub expr: String,
    pub lipschitz: Vec<f64>,
    pub value_at_zero: Vec<f64>,
}

/// The six delay families and their common upper bound.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaysBlock {
    pub leakage_x: Vec<String>,
    pub leakage_y: Vec<String>,
    pub discrete: Vec<Vec<String>>,
    pub distributed: Vec<Vec<String>>,
    pub derivative_distributed: Vec<Vec<String>>,
    pub second_order: Vec<String>,
    pub theta: f64,
}

/// Scan and solver settings shared by the analysis commands.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    pub scan_window: [f64; 2],
    pub density: f64,
    /// Fixed-point iteration convergence threshold (sup norm).
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the certified rate bound actually claimed, in (0, 1).
    pub safety_fraction: f64,
    /// Leakage-comparison knob override; per-row defaults when omitted.
    pub beta: Option<f64>,
    /// Kernel truncation depth override; tail-tolerance default when omitted.
    pub cutoff: Option<f64>,
}

/// Simulation horizon and initial-history source.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub horizon: f64,
    /// Explicit per-component history expressions; randomized from `seed`
    /// when omitted (give both layers or neither).
    pub init_x: Option<Vec<String>>,
    pub init_y: Option<Vec<String>>,
    /// Explicit Δ-channel expressions, used only when `derive_init_delta`
    /// is false.
    pub init_x_delta: Option<Vec<String>>,
    pub init_y_delta: Option<Vec<String>>,
    /// Derive dense-segment Δ-channels by finite differences of the state
    /// expressions instead of reading `init_*_delta`.
    #[serde(default = "default_true")]
    pub derive_init_delta: bool,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

fn parse_field(src: &str, field: String) -> Result<Expr, ConfigError> {
    parse(src).map_err(|source| ConfigError::Expr { field, source })
}

fn parse_vec(v: &[String], field: &str) -> Result<Vec<Expr>, ConfigError> {
    v.iter()
        .enumerate()
        .map(|(k, s)| parse_field(s, format!("{field}[{k}]")))
        .collect()
}

fn parse_mat(m: &[Vec<String>], field: &str) -> Result<Vec<Vec<Expr>>, ConfigError> {
    m.iter()
        .enumerate()
        .map(|(i, row)| parse_vec(row, &format!("{field}[{i}]")))
        .collect()
}

fn parse_tensor(t: &[Vec<Vec<String>>], field: &str) -> Result<Vec<Vec<Vec<Expr>>>, ConfigError> {
    t.iter()
        .enumerate()
        .map(|(i, block)| parse_mat(block, &format!("{field}[{i}]")))
        .collect()
}

impl TimescaleBlock {
    pub fn build(&self) -> Result<TimeScale, ConfigError> {
        let field = |name: &str| format!("timescale.{name}");
        let need = |o: Option<f64>, name: &str| {
            o.ok_or_else(|| ConfigError::Value {
                field: field(name),
                what: format!("required when kind = `{}`", self.kind),
            })
        };
        let positive = |v: f64, name: &str| {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(ConfigError::Value { field: field(name), what: format!("must be positive, got {v}") })
            }
        };
        match self.kind.as_str() {
            "continuum" => {
                Ok(TimeScale::continuum(positive(need(self.resolution, "resolution")?, "resolution")?))
            }
            "uniform_grid" => Ok(TimeScale::uniform_grid(positive(need(self.step, "step")?, "step")?)),
            "periodic_union" => {
                let on = need(self.on_length, "on_length")?;
                let gap = need(self.gap, "gap")?;
                if on < 0.0 || gap < 0.0 || on + gap <= 0.0 {
                    return Err(ConfigError::Value {
                        field: field("on_length/gap"),
                        what: format!("need nonnegative lengths with a positive period, got {on} and {gap}"),
                    });
                }
                let res = positive(need(self.resolution, "resolution")?, "resolution")?;
                Ok(TimeScale::periodic_union(on, gap, self.anchor.unwrap_or(0.0), res))
            }
            other => Err(ConfigError::Value {
                field: field("kind"),
                what: format!("unknown kind `{other}` (continuum, uniform_grid, periodic_union)"),
            }),
        }
    }
}

impl ExperimentConfig {
    /// Reads and deserializes a document, returning the raw bytes as well
    /// (manifests hash the bytes, not the parsed form).
    pub fn from_path(path: &Path) -> Result<(Self, Vec<u8>), ConfigError> {
        let bytes = fs::read(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg = serde_json::from_slice(&bytes)?;
        Ok((cfg, bytes))
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, ConfigError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn timescale(&self) -> Result<TimeScale, ConfigError> {
        self.timescale.build()
    }

    pub fn scan_window(&self) -> (f64, f64) {
        (self.analysis.scan_window[0], self.analysis.scan_window[1])
    }

    /// Kernel truncation depth: the configured override or the depth at
    /// which the slowest exponential kernel falls below the tail tolerance.
    pub fn picard_cutoff(&self, slowest_decay: f64) -> f64 {
        self.analysis
            .cutoff
            .unwrap_or_else(|| (1.0 / KERNEL_TAIL_TOLERANCE).ln() / slowest_decay)
    }

    /// Parses every coefficient expression into a [`NetworkSpec`]. Shape
    /// consistency beyond what parsing touches is [`NetworkSpec::validate`]'s
    /// job.
    pub fn network(&self) -> Result<NetworkSpec, ConfigError> {
        let nb = &self.network;
        let db = &self.delays;
        Ok(NetworkSpec {
            n: nb.n,
            m: nb.m,
            alpha: parse_vec(&nb.alpha, "network.alpha")?,
            c: parse_vec(&nb.c, "network.c")?,
            d: parse_mat(&nb.d, "network.d")?,
            d_tau: parse_mat(&nb.d_tau, "network.d_tau")?,
            d_bar: parse_mat(&nb.d_bar, "network.d_bar")?,
            d_tilde: parse_mat(&nb.d_tilde, "network.d_tilde")?,
            e: parse_mat(&nb.e, "network.e")?,
            e_tau: parse_mat(&nb.e_tau, "network.e_tau")?,
            e_bar: parse_mat(&nb.e_bar, "network.e_bar")?,
            e_tilde: parse_mat(&nb.e_tilde, "network.e_tilde")?,
            t2: parse_tensor(&nb.t2, "network.t2")?,
            t2_bar: parse_tensor(&nb.t2_bar, "network.t2_bar")?,
            input_x: parse_vec(&nb.input_x, "network.input_x")?,
            input_y: parse_vec(&nb.input_y, "network.input_y")?,
            activation: ActivationSpec {
                expr: parse_field(&nb.activation.expr, "network.activation.expr".into())?,
                lipschitz: nb.activation.lipschitz.clone(),
                value_at_zero: nb.activation.value_at_zero.clone(),
            },
            delays: DelaySpec {
                leakage_x: parse_vec(&db.leakage_x, "delays.leakage_x")?,
                leakage_y: parse_vec(&db.leakage_y, "delays.leakage_y")?,
                discrete: parse_mat(&db.discrete, "delays.discrete")?,
                distributed: parse_mat(&db.distributed, "delays.distributed")?,
                derivative_distributed: parse_mat(&db.derivative_distributed, "delays.derivative_distributed")?,
                second_order: parse_vec(&db.second_order, "delays.second_order")?,
                theta: db.theta,
            },
        })
    }

    /// Builds the initial history over the padded pre-window: explicit
    /// expressions when configured, otherwise randomized ones from `seed`.
    pub fn initial_history(&self, ts: &TimeScale, seed: u64) -> Result<Trajectory, ConfigError> {
        let window = initial_history_window(ts, self.delays.theta);
        let (n, m) = (self.network.n, self.network.m);
        let explicit = match (&self.run.init_x, &self.run.init_y) {
            (Some(x), Some(y)) => {
                Some((parse_vec(x, "run.init_x")?, parse_vec(y, "run.init_y")?))
            }
            (None, None) => None,
            _ => {
                return Err(ConfigError::Value {
                    field: "run.init_x/init_y".into(),
                    what: "give explicit histories for both layers or neither".into(),
                })
            }
        };
        let (xs, ys) = explicit.unwrap_or_else(|| randomized_history_exprs(n, m, seed));
        let check = |len: usize, want: usize, field: &str| {
            if len == want {
                Ok(())
            } else {
                Err(ConfigError::Value {
                    field: field.into(),
                    what: format!("{len} expressions for {want} components"),
                })
            }
        };
        check(xs.len(), n, "run.init_x")?;
        check(ys.len(), m, "run.init_y")?;
        let deltas = if self.run.derive_init_delta {
            None
        } else {
            let xd = self.run.init_x_delta.as_ref().ok_or_else(|| ConfigError::Value {
                field: "run.init_x_delta".into(),
                what: "required when derive_init_delta is false".into(),
            })?;
            let yd = self.run.init_y_delta.as_ref().ok_or_else(|| ConfigError::Value {
                field: "run.init_y_delta".into(),
                what: "required when derive_init_delta is false".into(),
            })?;
            Some((parse_vec(xd, "run.init_x_delta")?, parse_vec(yd, "run.init_y_delta")?))
        };
        let (xd, yd) = match &deltas {
            Some((a, b)) => (Some(a.as_slice()), Some(b.as_slice())),
            None => (None, None),
        };
        Ok(history_from_exprs(ts, &xs, &ys, xd, yd, window)?)
    }
}

/// Deterministic per-seed initial-history expressions: each component is
/// `a + b*cos(c*t)` with `a`, `b` uniform in [-0.2, 0.2] and `c` in
/// [0.5, 2.5]. Coefficients are embedded through their shortest exact
/// decimal form, so rebuilding from the same seed is bit-identical.
pub fn randomized_history_exprs(n: usize, m: usize, seed: u64) -> (Vec<Expr>, Vec<Expr>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut component = || {
        let a = rng.gen_range(-0.2..0.2);
        let b: f64 = rng.gen_range(-0.2..0.2);
        let c = rng.gen_range(0.5..2.5);
        let sign = if b >= 0.0 { "+" } else { "" };
        parse(&format!("{a:?}{sign}{b:?}*cos({c:?}*t)")).expect("generated history expression")
    };
    let xs = (0..n).map(|_| component()).collect();
    let ys = (0..m).map(|_| component()).collect();
    (xs, ys)
}
