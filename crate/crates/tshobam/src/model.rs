//! Two-layer associative network with leakage, discrete, distributed,
//! derivative-distributed, and second-order delays.
//!
//! Layer x (size n) is driven by layer y (size m) and vice versa. The
//! right-hand side of the system is
//!
//! ```text
//! xᵢΔ = −αᵢ(t)·xᵢ(t−ηᵢ(t)) + Σⱼ Dᵢⱼ f(yⱼ(t)) + Σⱼ Dτᵢⱼ f(yⱼ(t−τᵢⱼ))
//!       + Σⱼ D̄ᵢⱼ ∫_{t−σᵢⱼ}^t f(yⱼ(s)) Δs + Σⱼ D̃ᵢⱼ ∫_{t−ξᵢⱼ}^t f(yⱼΔ(s)) Δs
//!       + Σⱼ Σₖ Tᵢⱼₖ f(yₖ(t−χₖ)) f(yⱼ(t−χⱼ)) + Iᵢ(t)
//! ```
//!
//! and symmetrically for yⱼΔ with c, the E-families, T̄, and x-histories.
//! Delayed arguments are projected backward onto the scale so histories
//! are never read ahead of time; distributed windows are Δ-integrals
//! with the inf-above endpoint convention.
//!
//! `operator_f` / `operator_g` evaluate the fixed-point forcing terms of
//! the equivalent integral form: the same coupling sums, but with the
//! leakage term replaced by its correction integral
//! `+αᵢ(t)·∫_{t−ηᵢ}^t φᵢΔ(s) Δs` over the candidate's Δ-channel.

use crate::exprlang::{Expr, ExprError};
use crate::timescale::{IntegralError, ScaleError, TimeScale};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("history lookup at t = {needed} precedes its lower bound {lower_bound}")]
    HistoryTooShort { needed: f64, lower_bound: f64 },
    #[error(transparent)]
    Domain(#[from] ExprError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error("invalid network: {what}")]
    Invalid { what: String },
}

impl From<IntegralError<ModelError>> for ModelError {
    fn from(e: IntegralError<ModelError>) -> Self {
        match e {
            IntegralError::Scale(s) => ModelError::Scale(s),
            IntegralError::Eval(m) => m,
        }
    }
}

/// Scalar activation applied elementwise, with the per-index Lipschitz
/// constants and |f(0)| values the hypothesis checks consume.
#[derive(Debug, Clone)]
pub struct ActivationSpec {
    pub expr: Expr,
    pub lipschitz: Vec<f64>,
    pub value_at_zero: Vec<f64>,
}

impl ActivationSpec {
    pub fn apply(&self, u: f64) -> Result<f64, ExprError> {
        self.expr.eval(u)
    }
}

/// All delay channels. `theta` is the numeric supremum of every delay
/// over the scan window; initial histories must reach back that far.
#[derive(Debug, Clone)]
pub struct DelaySpec {
    pub leakage_x: Vec<Expr>,
    pub leakage_y: Vec<Expr>,
    pub discrete: Vec<Vec<Expr>>,
    pub distributed: Vec<Vec<Expr>>,
    pub derivative_distributed: Vec<Vec<Expr>>,
    pub second_order: Vec<Expr>,
    pub theta: f64,
}

#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub n: usize,
    pub m: usize,
    pub alpha: Vec<Expr>,
    pub c: Vec<Expr>,
    /// y→x couplings, n×m: instantaneous, discrete-delay, distributed,
    /// derivative-distributed.
    pub d: Vec<Vec<Expr>>,
    pub d_tau: Vec<Vec<Expr>>,
    pub d_bar: Vec<Vec<Expr>>,
    pub d_tilde: Vec<Vec<Expr>>,
    /// x→y couplings, stored n×m and summed over the first index.
    pub e: Vec<Vec<Expr>>,
    pub e_tau: Vec<Vec<Expr>>,
    pub e_bar: Vec<Vec<Expr>>,
    pub e_tilde: Vec<Vec<Expr>>,
    /// Second-order y→x tensor, n×m×m.
    pub t2: Vec<Vec<Vec<Expr>>>,
    /// Second-order x→y tensor, m×n×n.
    pub t2_bar: Vec<Vec<Vec<Expr>>>,
    pub input_x: Vec<Expr>,
    pub input_y: Vec<Expr>,
    pub activation: ActivationSpec,
    pub delays: DelaySpec,
}

/// Both layers and their Δ-channels at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub x_delta: Vec<f64>,
    pub y_delta: Vec<f64>,
}

impl StateSnapshot {
    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).chain(&self.x_delta).chain(&self.y_delta).all(|v| v.is_finite())
    }
}

/// Read access to a (partial) solution: state and Δ-channels of both
/// layers at arbitrary scale points down to `lower_bound`.
pub trait HistorySource {
    fn lower_bound(&self) -> f64;
    fn x_at(&self, i: usize, t: f64) -> Result<f64, ModelError>;
    fn y_at(&self, j: usize, t: f64) -> Result<f64, ModelError>;
    fn x_delta_at(&self, i: usize, t: f64) -> Result<f64, ModelError>;
    fn y_delta_at(&self, j: usize, t: f64) -> Result<f64, ModelError>;
}

impl NetworkSpec {
    /// A network of the given shape with every coefficient, input,
    /// delay, and the activation identically zero.
    pub fn zeroed(n: usize, m: usize) -> Self {
        let z = || Expr::Num(0.0);
        let mat = |r: usize, c: usize| vec![vec![z(); c]; r];
        let big = n.max(m);
        NetworkSpec {
            n,
            m,
            alpha: vec![z(); n],
            c: vec![z(); m],
            d: mat(n, m),
            d_tau: mat(n, m),
            d_bar: mat(n, m),
            d_tilde: mat(n, m),
            e: mat(n, m),
            e_tau: mat(n, m),
            e_bar: mat(n, m),
            e_tilde: mat(n, m),
            t2: vec![mat(m, m); n],
            t2_bar: vec![mat(n, n); m],
            input_x: vec![z(); n],
            input_y: vec![z(); m],
            activation: ActivationSpec {
                expr: z(),
                lipschitz: vec![0.0; big],
                value_at_zero: vec![0.0; big],
            },
            delays: DelaySpec {
                leakage_x: vec![z(); n],
                leakage_y: vec![z(); m],
                discrete: mat(n, m),
                distributed: mat(n, m),
                derivative_distributed: mat(n, m),
                second_order: vec![z(); big],
                theta: 0.0,
            },
        }
    }

    /// Structural and sampled-value checks: dimensions, nonnegative
    /// Lipschitz data, |f(0)| consistency, nonnegative delays dominated
    /// by theta, and positive regressivity of −α and −c on the window.
    pub fn validate(&self, ts: &TimeScale, window: (f64, f64)) -> Result<(), ModelError> {
        let bad = |what: String| Err(ModelError::Invalid { what });
        let (n, m) = (self.n, self.m);
        if n == 0 || m == 0 {
            return bad("layer sizes must be positive".into());
        }
        let dims: [(&str, usize, usize); 2] = [("alpha", self.alpha.len(), n), ("c", self.c.len(), m)];
        for (name, got, want) in dims {
            if got != want {
                return bad(format!("{name} has length {got}, expected {want}"));
            }
        }
        let mats: [(&str, &Vec<Vec<Expr>>); 11] = [
            ("d", &self.d),
            ("d_tau", &self.d_tau),
            ("d_bar", &self.d_bar),
            ("d_tilde", &self.d_tilde),
            ("e", &self.e),
            ("e_tau", &self.e_tau),
            ("e_bar", &self.e_bar),
            ("e_tilde", &self.e_tilde),
            ("discrete delay", &self.delays.discrete),
            ("distributed delay", &self.delays.distributed),
            ("derivative-distributed delay", &self.delays.derivative_distributed),
        ];
        for (name, mat) in mats {
            if mat.len() != n || mat.iter().any(|row| row.len() != m) {
                return bad(format!("{name} matrix is not {n}x{m}"));
            }
        }
        if self.t2.len() != n || self.t2.iter().any(|b| b.len() != m || b.iter().any(|r| r.len() != m)) {
            return bad(format!("second-order tensor is not {n}x{m}x{m}"));
        }
        if self.t2_bar.len() != m
            || self.t2_bar.iter().any(|b| b.len() != n || b.iter().any(|r| r.len() != n))
        {
            return bad(format!("mirrored second-order tensor is not {m}x{n}x{n}"));
        }
        if self.input_x.len() != n || self.input_y.len() != m {
            return bad("input vector length mismatch".into());
        }
        if self.delays.leakage_x.len() != n || self.delays.leakage_y.len() != m {
            return bad("leakage delay vector length mismatch".into());
        }
        let big = n.max(m);
        if self.delays.second_order.len() < big {
            return bad(format!("second-order delay vector shorter than {big}"));
        }
        if self.activation.lipschitz.len() < big || self.activation.value_at_zero.len() < big {
            return bad(format!("activation metadata shorter than {big}"));
        }
        if self.activation.lipschitz.iter().any(|v| *v < 0.0) {
            return bad("negative Lipschitz constant".into());
        }
        let f0 = self.activation.apply(0.0)?.abs();
        for (k, v) in self.activation.value_at_zero.iter().enumerate() {
            if *v < 0.0 || (v - f0).abs() > 1e-12 {
                return bad(format!(
                    "declared |f(0)| = {v} at index {k} disagrees with evaluated {f0}"
                ));
            }
        }
        let pts = ts.enumerate_grid(window.0, window.1)?;
        let theta = self.delays.theta;
        let check_delay = |name: &str, e: &Expr| -> Result<(), ModelError> {
            for gp in &pts {
                let v = e.eval(gp.t)?;
                if v < -1e-12 {
                    return bad(format!("{name} is negative ({v}) at t = {}", gp.t));
                }
                if v > theta + 1e-9 {
                    return bad(format!("{name} = {v} at t = {} exceeds theta = {theta}", gp.t));
                }
            }
            Ok(())
        };
        for (i, e) in self.delays.leakage_x.iter().enumerate() {
            check_delay(&format!("leakage delay x[{i}]"), e)?;
        }
        for (j, e) in self.delays.leakage_y.iter().enumerate() {
            check_delay(&format!("leakage delay y[{j}]"), e)?;
        }
        for (name, mat) in [
            ("discrete delay", &self.delays.discrete),
            ("distributed delay", &self.delays.distributed),
            ("derivative-distributed delay", &self.delays.derivative_distributed),
        ] {
            for (i, row) in mat.iter().enumerate() {
                for (j, e) in row.iter().enumerate() {
                    check_delay(&format!("{name}[{i}][{j}]"), e)?;
                }
            }
        }
        for (k, e) in self.delays.second_order.iter().enumerate() {
            check_delay(&format!("second-order delay[{k}]"), e)?;
        }
        use crate::timescale::Regressivity;
        for (name, decays) in [("alpha", &self.alpha), ("c", &self.c)] {
            for (k, e) in decays.iter().enumerate() {
                let reg = ts.is_regressive(|t| -(e.eval(t).unwrap_or(f64::NAN)), window)?;
                if reg != Regressivity::PositivelyRegressive {
                    return bad(format!("-{name}[{k}] is not positively regressive on the window"));
                }
            }
        }
        Ok(())
    }
}

/// Context shared by the coupling sums of `rhs`, `operator_f`, and
/// `operator_g`: everything except the leakage term.
struct Coupling<'a, H: HistorySource + ?Sized> {
    ts: &'a TimeScale,
    net: &'a NetworkSpec,
    src: &'a H,
    t: f64,
}

impl<'a, H: HistorySource + ?Sized> Coupling<'a, H> {
    fn f(&self, u: f64) -> Result<f64, ModelError> {
        Ok(self.net.activation.apply(u)?)
    }

    /// f applied to every y (resp. x) component at its second-order
    /// delayed argument, shared across rows and tensor slots.
    fn second_order_terms(&self, x_layer: bool) -> Result<Vec<f64>, ModelError> {
        let count = if x_layer { self.net.n } else { self.net.m };
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let chi = self.net.delays.second_order[k].eval(self.t)?;
            let s = self.ts.project_backward(self.t - chi);
            let v = if x_layer { self.src.x_at(k, s)? } else { self.src.y_at(k, s)? };
            out.push(self.f(v)?);
        }
        Ok(out)
    }

    /// Coupling sum feeding x-row i from the y layer, plus the input.
    fn into_x(&self, i: usize, fy_chi: &[f64]) -> Result<f64, ModelError> {
        let net = self.net;
        let t = self.t;
        let mut acc = net.input_x[i].eval(t)?;
        for j in 0..net.m {
            acc += net.d[i][j].eval(t)? * self.f(self.src.y_at(j, t)?)?;

            let tau = net.delays.discrete[i][j].eval(t)?;
            let s = self.ts.project_backward(t - tau);
            acc += net.d_tau[i][j].eval(t)? * self.f(self.src.y_at(j, s)?)?;

            let sigma = net.delays.distributed[i][j].eval(t)?;
            acc += net.d_bar[i][j].eval(t)?
                * self.ts.try_delta_integral(|s| self.f(self.src.y_at(j, s)?), t - sigma, t)?;

            let xi = net.delays.derivative_distributed[i][j].eval(t)?;
            acc += net.d_tilde[i][j].eval(t)?
                * self.ts.try_delta_integral(|s| self.f(self.src.y_delta_at(j, s)?), t - xi, t)?;

            for k in 0..net.m {
                acc += net.t2[i][j][k].eval(t)? * fy_chi[k] * fy_chi[j];
            }
        }
        Ok(acc)
    }

    /// Coupling sum feeding y-row j from the x layer, plus the input.
    fn into_y(&self, j: usize, fx_chi: &[f64]) -> Result<f64, ModelError> {
        let net = self.net;
        let t = self.t;
        let mut acc = net.input_y[j].eval(t)?;
        for i in 0..net.n {
            acc += net.e[i][j].eval(t)? * self.f(self.src.x_at(i, t)?)?;

            let tau = net.delays.discrete[i][j].eval(t)?;
            let s = self.ts.project_backward(t - tau);
            acc += net.e_tau[i][j].eval(t)? * self.f(self.src.x_at(i, s)?)?;

            let sigma = net.delays.distributed[i][j].eval(t)?;
            acc += net.e_bar[i][j].eval(t)?
                * self.ts.try_delta_integral(|s| self.f(self.src.x_at(i, s)?), t - sigma, t)?;

            let xi = net.delays.derivative_distributed[i][j].eval(t)?;
            acc += net.e_tilde[i][j].eval(t)?
                * self.ts.try_delta_integral(|s| self.f(self.src.x_delta_at(i, s)?), t - xi, t)?;

            for k in 0..net.n {
                acc += net.t2_bar[j][i][k].eval(t)? * fx_chi[k] * fx_chi[i];
            }
        }
        Ok(acc)
    }
}

/// The system's right-hand side at t, with delayed and distributed
/// arguments read from `hist`.
pub fn rhs<H: HistorySource + ?Sized>(
    ts: &TimeScale,
    net: &NetworkSpec,
    hist: &H,
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let ctx = Coupling { ts, net, src: hist, t };
    let fy_chi = ctx.second_order_terms(false)?;
    let fx_chi = ctx.second_order_terms(true)?;
    let mut xd = Vec::with_capacity(net.n);
    for i in 0..net.n {
        let eta = net.delays.leakage_x[i].eval(t)?;
        let s = ts.project_backward(t - eta);
        let leak = -net.alpha[i].eval(t)? * hist.x_at(i, s)?;
        xd.push(leak + ctx.into_x(i, &fy_chi)?);
    }
    let mut yd = Vec::with_capacity(net.m);
    for j in 0..net.m {
        let vs = net.delays.leakage_y[j].eval(t)?;
        let s = ts.project_backward(t - vs);
        let leak = -net.c[j].eval(t)? * hist.y_at(j, s)?;
        yd.push(leak + ctx.into_y(j, &fx_chi)?);
    }
    Ok((xd, yd))
}

/// Fixed-point forcing terms for the x layer: the coupling sums of
/// `rhs` with the leakage term replaced by its correction integral
/// αᵢ(t)·∫_{t−ηᵢ(t)}^t φᵢΔ(s) Δs over the candidate ψ.
pub fn operator_f<H: HistorySource + ?Sized>(
    ts: &TimeScale,
    net: &NetworkSpec,
    psi: &H,
    t: f64,
) -> Result<Vec<f64>, ModelError> {
    let ctx = Coupling { ts, net, src: psi, t };
    let fy_chi = ctx.second_order_terms(false)?;
    let mut out = Vec::with_capacity(net.n);
    for i in 0..net.n {
        let eta = net.delays.leakage_x[i].eval(t)?;
        let corr = net.alpha[i].eval(t)?
            * ts.try_delta_integral(|s| psi.x_delta_at(i, s), t - eta, t)?;
        out.push(corr + ctx.into_x(i, &fy_chi)?);
    }
    Ok(out)
}

/// Mirror of `operator_f` for the y layer, with the correction integral
/// over the y-candidate's Δ-channel.
pub fn operator_g<H: HistorySource + ?Sized>(
    ts: &TimeScale,
    net: &NetworkSpec,
    psi: &H,
    t: f64,
) -> Result<Vec<f64>, ModelError> {
    let ctx = Coupling { ts, net, src: psi, t };
    let fx_chi = ctx.second_order_terms(true)?;
    let mut out = Vec::with_capacity(net.m);
    for j in 0..net.m {
        let vs = net.delays.leakage_y[j].eval(t)?;
        let corr = net.c[j].eval(t)?
            * ts.try_delta_integral(|s| psi.y_delta_at(j, s), t - vs, t)?;
        out.push(corr + ctx.into_y(j, &fx_chi)?);
    }
    Ok(out)
}
