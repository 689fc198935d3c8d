//! Method-of-steps integration of the delayed network and the
//! function-space diagnostics computed on trajectories.
//!
//! At a right-scattered point the solution advances exactly by the
//! Δ-derivative relation `x(σ(t)) = x(t) + μ(t)·rhs(t)`, so the
//! trajectory invariant holds bitwise on grids. On continuum segments a
//! classical 4-stage Runge–Kutta step of width `resolution` is used;
//! delayed lookups during a step read the trajectory so far plus a
//! provisional stage point through linear interpolation.

use crate::exprlang::{Expr, ExprError};
use crate::model::{rhs, HistorySource, ModelError, NetworkSpec, StateSnapshot};
use crate::timescale::{GridPoint, ScaleError, TimeScale};
use std::io;
use thiserror::Error;

/// States with any component beyond this magnitude abort the march:
/// the bounded-region theory means blow-up signals a mis-specified run.
pub const RUNAWAY_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state left the finite range at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("weight is not positive at t = {t}")]
    NonPositiveWeight { t: f64 },
    #[error("window [{from}, {to}] carries no Δ-measure")]
    ZeroMeasureWindow { from: f64, to: f64 },
    #[error("inconsistent trajectory data: {what}")]
    BadChannels { what: String },
    #[error("failed to write trajectory: {0}")]
    Io(#[from] io::Error),
}

/// A solution path: ordered grid, state channels, and Δ-channels for
/// both layers. On right-scattered grid points the stored Δ-channel is
/// exactly the forward difference quotient across the jump.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Vec<GridPoint>,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    x_delta: Vec<Vec<f64>>,
    y_delta: Vec<Vec<f64>>,
}

/// Selects one scalar channel of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    X(usize),
    Y(usize),
    XDelta(usize),
    YDelta(usize),
}

impl Trajectory {
    /// Builds a trajectory from raw channels, checking shape, grid
    /// monotonicity, and finiteness.
    pub fn from_channels(
        grid: Vec<GridPoint>,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        x_delta: Vec<Vec<f64>>,
        y_delta: Vec<Vec<f64>>,
    ) -> Result<Self, SimError> {
        if grid.is_empty() {
            return Err(SimError::BadChannels { what: "empty grid".into() });
        }
        if grid.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(SimError::BadChannels { what: "grid not strictly increasing".into() });
        }
        let len = grid.len();
        for (name, chans) in [("x", &x), ("y", &y), ("x_delta", &x_delta), ("y_delta", &y_delta)] {
            if chans.iter().any(|c| c.len() != len) {
                return Err(SimError::BadChannels {
                    what: format!("channel {name} length differs from grid length {len}"),
                });
            }
            if chans.iter().flatten().any(|v| !v.is_finite()) {
                return Err(SimError::BadChannels { what: format!("non-finite value in {name}") });
            }
        }
        if x.len() != x_delta.len() || y.len() != y_delta.len() {
            return Err(SimError::BadChannels { what: "layer width mismatch".into() });
        }
        Ok(Trajectory { grid, x, y, x_delta, y_delta })
    }

    pub fn lower_bound(&self) -> f64 {
        self.grid[0].t
    }

    pub fn upper_bound(&self) -> f64 {
        self.grid[self.grid.len() - 1].t
    }

    pub fn grid(&self) -> &[GridPoint] {
        &self.grid
    }

    pub fn layer_sizes(&self) -> (usize, usize) {
        (self.x.len(), self.y.len())
    }

    pub fn snapshot(&self, idx: usize) -> StateSnapshot {
        StateSnapshot {
            t: self.grid[idx].t,
            x: self.x.iter().map(|c| c[idx]).collect(),
            y: self.y.iter().map(|c| c[idx]).collect(),
            x_delta: self.x_delta.iter().map(|c| c[idx]).collect(),
            y_delta: self.y_delta.iter().map(|c| c[idx]).collect(),
        }
    }

    fn channel_slice(&self, ch: Channel) -> &[f64] {
        match ch {
            Channel::X(i) => &self.x[i],
            Channel::Y(j) => &self.y[j],
            Channel::XDelta(i) => &self.x_delta[i],
            Channel::YDelta(j) => &self.y_delta[j],
        }
    }

    /// Index of the last grid point ≤ t (with snap tolerance).
    fn locate(&self, t: f64) -> Result<usize, ModelError> {
        let tol = 1e-9 * t.abs().max(1.0);
        if t < self.lower_bound() - tol {
            return Err(ModelError::HistoryTooShort { needed: t, lower_bound: self.lower_bound() });
        }
        let idx = self.grid.partition_point(|g| g.t <= t + tol);
        Ok(idx.saturating_sub(1))
    }

    /// Linear interpolation on the stored grid; exact at grid points.
    fn sample(&self, values: &[f64], t: f64) -> Result<f64, ModelError> {
        let i = self.locate(t)?;
        let gi = self.grid[i];
        let tol = 1e-9 * t.abs().max(1.0);
        if (t - gi.t).abs() <= tol || i + 1 >= self.grid.len() {
            return Ok(values[i]);
        }
        let gj = self.grid[i + 1];
        let w = (t - gi.t) / (gj.t - gi.t);
        Ok(values[i] + w * (values[i + 1] - values[i]))
    }

    /// Total-function view of a channel for the diagnostics; values are
    /// clamped to the trajectory's bounds.
    pub fn channel_fn(&self, ch: Channel) -> impl Fn(f64) -> f64 + '_ {
        let values = self.channel_slice(ch);
        move |t: f64| {
            let clamped = t.clamp(self.lower_bound(), self.upper_bound());
            self.sample(values, clamped).expect("clamped sample")
        }
    }

    /// CSV export: header `t, x1..xn, y1..ym, dx1..dxn, dy1..dym`, one
    /// row per grid point, 17 significant digits.
    pub fn to_csv<W: io::Write>(&self, mut w: W) -> Result<(), SimError> {
        let (n, m) = self.layer_sizes();
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(", x{i}"));
        }
        for j in 1..=m {
            header.push_str(&format!(", y{j}"));
        }
        for i in 1..=n {
            header.push_str(&format!(", dx{i}"));
        }
        for j in 1..=m {
            header.push_str(&format!(", dy{j}"));
        }
        writeln!(w, "{header}")?;
        for (idx, gp) in self.grid.iter().enumerate() {
            let mut row = format!("{:.16e}", gp.t);
            for c in self.x.iter().chain(&self.y).chain(&self.x_delta).chain(&self.y_delta) {
                row.push_str(&format!(", {:.16e}", c[idx]));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    /// Verifies the defining Δ-relation at every right-scattered point:
    /// state(σ(t)) = state(t) + μ(t)·Δ(t), exactly as stored.
    pub fn scattered_identity_error(&self, ts: &TimeScale) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in 0..self.grid.len().saturating_sub(1) {
            let gp = self.grid[idx];
            if !gp.is_right_scattered {
                continue;
            }
            let mu = match ts.graininess(gp.t) {
                Ok(mu) if mu > 0.0 => mu,
                _ => continue,
            };
            let next = self.grid[idx + 1];
            if (next.t - (gp.t + mu)).abs() > 1e-9 * gp.t.abs().max(1.0) {
                continue; // σ(t) outside the stored window
            }
            for (vals, deltas) in
                self.x.iter().zip(&self.x_delta).chain(self.y.iter().zip(&self.y_delta))
            {
                let predicted = vals[idx] + mu * deltas[idx];
                worst = worst.max((vals[idx + 1] - predicted).abs());
            }
        }
        worst
    }
}

impl HistorySource for Trajectory {
    fn lower_bound(&self) -> f64 {
        self.grid[0].t
    }
    fn x_at(&self, i: usize, t: f64) -> Result<f64, ModelError> {
        self.sample(&self.x[i], t)
    }
    fn y_at(&self, j: usize, t: f64) -> Result<f64, ModelError> {
        self.sample(&self.y[j], t)
    }
    fn x_delta_at(&self, i: usize, t: f64) -> Result<f64, ModelError> {
        self.sample(&self.x_delta[i], t)
    }
    fn y_delta_at(&self, j: usize, t: f64) -> Result<f64, ModelError> {
        self.sample(&self.y_delta[j], t)
    }
}

/// Trajectory plus one provisional stage point, used for delayed
/// lookups inside a Runge–Kutta step before the step is committed.
struct Overlay<'a> {
    base: &'a Trajectory,
    t0: f64,
    t1: f64,
    x0: Vec<f64>,
    y0: Vec<f64>,
    x1: Vec<f64>,
    y1: Vec<f64>,
    xd: Vec<f64>,
    yd: Vec<f64>,
}

impl Overlay<'_> {
    fn blend(&self, t: f64, v0: f64, v1: f64) -> f64 {
        let w = (t - self.t0) / (self.t1 - self.t0);
        v0 + w * (v1 - v0)
    }
}

impl HistorySource for Overlay<'_> {
    fn lower_bound(&self) -> f64 {
        self.base.lower_bound()
    }
    fn x_at(&self, i: usize, t: f64) -> Result<f64, ModelError> {
        if t > self.t0 {
            Ok(self.blend(t.min(self.t1), self.x0[i], self.x1[i]))
        } else {
            self.base.x_at(i, t)
        }
    }
    fn y_at(&self, j: usize, t: f64) -> Result<f64, ModelError> {
        if t > self.t0 {
            Ok(self.blend(t.min(self.t1), self.y0[j], self.y1[j]))
        } else {
            self.base.y_at(j, t)
        }
    }
    fn x_delta_at(&self, i: usize, t: f64) -> Result<f64, ModelError> {
        if t > self.t0 {
            Ok(self.xd[i])
        } else {
            self.base.x_delta_at(i, t)
        }
    }
    fn y_delta_at(&self, j: usize, t: f64) -> Result<f64, ModelError> {
        if t > self.t0 {
            Ok(self.yd[j])
        } else {
            self.base.y_delta_at(j, t)
        }
    }
}

/// Window the initial history must cover: from the backward projection
/// of −theta (padded for scan-undersampled delay peaks and one cell of
/// lookup slack) up to the start of the run at the scale point ≤ 0.
pub fn initial_history_window(ts: &TimeScale, theta: f64) -> (f64, f64) {
    let pad = 0.05 * theta + ts.resolution() + ts.graininess_sup();
    (ts.project_backward(-theta - pad), ts.project_backward(0.0))
}

/// Builds an initial history by sampling expressions on the window's
/// enumeration grid. Δ-channels: on right-scattered nodes always the
/// exact difference quotient of the sampled expression (the defining
/// relation); on dense nodes the supplied Δ-expressions if given,
/// otherwise finite differences of the state expressions.
pub fn history_from_exprs(
    ts: &TimeScale,
    x: &[Expr],
    y: &[Expr],
    x_delta: Option<&[Expr]>,
    y_delta: Option<&[Expr]>,
    window: (f64, f64),
) -> Result<Trajectory, SimError> {
    let grid = ts.enumerate_grid(window.0, window.1)?;
    let build = |exprs: &[Expr], deltas: Option<&[Expr]>| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), SimError> {
        let mut vals = Vec::with_capacity(exprs.len());
        let mut dvals = Vec::with_capacity(exprs.len());
        for (k, e) in exprs.iter().enumerate() {
            let mut v = Vec::with_capacity(grid.len());
            let mut dv = Vec::with_capacity(grid.len());
            for gp in &grid {
                v.push(e.eval(gp.t)?);
                let d = if gp.is_right_scattered {
                    let mu = ts.graininess(gp.t)?;
                    let s = ts.forward_jump(gp.t)?;
                    (e.eval(s)? - e.eval(gp.t)?) / mu
                } else if let Some(des) = deltas {
                    des[k].eval(gp.t)?
                } else {
                    ts.delta_derivative(|u| e.eval(u).unwrap_or(f64::NAN), gp.t)?
                };
                dv.push(d);
            }
            vals.push(v);
            dvals.push(dv);
        }
        Ok((vals, dvals))
    };
    if let Some(d) = x_delta {
        if d.len() != x.len() {
            return Err(SimError::BadChannels { what: "x_delta expression count mismatch".into() });
        }
    }
    if let Some(d) = y_delta {
        if d.len() != y.len() {
            return Err(SimError::BadChannels { what: "y_delta expression count mismatch".into() });
        }
    }
    let (xs, xds) = build(x, x_delta)?;
    let (ys, yds) = build(y, y_delta)?;
    Trajectory::from_channels(grid, xs, ys, xds, yds)
}

fn check_finite(t: f64, states: &[&[f64]]) -> Result<(), SimError> {
    for s in states {
        for v in *s {
            if !v.is_finite() || v.abs() > RUNAWAY_LIMIT {
                return Err(SimError::NonFinite { t });
            }
        }
    }
    Ok(())
}

/// Marches the system from the end of `init` to the last scale point
/// ≤ `horizon`. Right-scattered points step exactly; dense segments use
/// RK4 on the global sampling lattice.
pub fn simulate(
    ts: &TimeScale,
    net: &NetworkSpec,
    init: &Trajectory,
    horizon: f64,
) -> Result<Trajectory, SimError> {
    let (n, m) = init.layer_sizes();
    if n != net.n || m != net.m {
        return Err(SimError::BadChannels {
            what: format!("history layers {n}x{m} do not match network {}x{}", net.n, net.m),
        });
    }
    let mut traj = init.clone();
    let target = ts.project_backward(horizon);
    let res = ts.resolution();
    loop {
        let idx = traj.grid.len() - 1;
        let t = traj.grid[idx].t;
        if t >= target - 1e-9 * target.abs().max(1.0) {
            break;
        }
        let mu = ts.graininess(t)?;
        if mu > 0.0 {
            let sigma = ts.forward_jump(t)?;
            if sigma > target + 1e-9 * target.abs().max(1.0) {
                break;
            }
            let (xd, yd) = rhs(ts, net, &traj, t)?;
            for (i, d) in xd.iter().enumerate() {
                traj.x_delta[i][idx] = *d;
                let next = traj.x[i][idx] + mu * d;
                traj.x[i].push(next);
                traj.x_delta[i].push(0.0);
            }
            for (j, d) in yd.iter().enumerate() {
                traj.y_delta[j][idx] = *d;
                let next = traj.y[j][idx] + mu * d;
                traj.y[j].push(next);
                traj.y_delta[j].push(0.0);
            }
            let scattered = ts.graininess(sigma)? > 0.0;
            traj.grid.push(GridPoint { t: sigma, is_right_scattered: scattered });
        } else {
            // next node: global lattice point clipped by segment end,
            // the horizon, and a minimum cell width
            let lattice = ((t / res).floor() + 1.0) * res;
            let (_, seg_hi) = ts.segment_bounds(t);
            let mut t1 = lattice.min(seg_hi).min(target);
            if t1 <= t + res * 1e-6 {
                // lattice point collides with the current node
                t1 = (lattice + res).min(seg_hi).min(target);
            }
            debug_assert!(t1 > t, "no forward progress from {t} toward {target}");
            let h = t1 - t;
            let x0: Vec<f64> = traj.x.iter().map(|c| c[idx]).collect();
            let y0: Vec<f64> = traj.y.iter().map(|c| c[idx]).collect();

            let (k1x, k1y) = rhs(ts, net, &traj, t)?;
            for (i, d) in k1x.iter().enumerate() {
                traj.x_delta[i][idx] = *d;
            }
            for (j, d) in k1y.iter().enumerate() {
                traj.y_delta[j][idx] = *d;
            }
            let mid = t + 0.5 * h;
            let stage = |tp: f64, kx: &[f64], ky: &[f64], step: f64| Overlay {
                base: &traj,
                t0: t,
                t1: tp,
                x0: x0.clone(),
                y0: y0.clone(),
                x1: x0.iter().zip(kx).map(|(v, k)| v + step * k).collect(),
                y1: y0.iter().zip(ky).map(|(v, k)| v + step * k).collect(),
                xd: kx.to_vec(),
                yd: ky.to_vec(),
            };
            let (k2x, k2y) = rhs(ts, net, &stage(mid, &k1x, &k1y, 0.5 * h), mid)?;
            let (k3x, k3y) = rhs(ts, net, &stage(mid, &k2x, &k2y, 0.5 * h), mid)?;
            let (k4x, k4y) = rhs(ts, net, &stage(t1, &k3x, &k3y, h), t1)?;
            let combine = |v0: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| {
                v0.iter()
                    .enumerate()
                    .map(|(k, v)| v + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]))
                    .collect::<Vec<f64>>()
            };
            let x1 = combine(&x0, &k1x, &k2x, &k3x, &k4x);
            let y1 = combine(&y0, &k1y, &k2y, &k3y, &k4y);
            check_finite(t1, &[&x1, &y1])?;
            for (i, v) in x1.iter().enumerate() {
                traj.x[i].push(*v);
                traj.x_delta[i].push(0.0);
            }
            for (j, v) in y1.iter().enumerate() {
                traj.y[j].push(*v);
                traj.y_delta[j].push(0.0);
            }
            let scattered = ts.graininess(t1)? > 0.0;
            traj.grid.push(GridPoint { t: t1, is_right_scattered: scattered });
        }
        let idx = traj.grid.len() - 1;
        let last_t = traj.grid[idx].t;
        let xs: Vec<f64> = traj.x.iter().map(|c| c[idx]).collect();
        let ys: Vec<f64> = traj.y.iter().map(|c| c[idx]).collect();
        check_finite(last_t, &[&xs, &ys])?;
    }
    // fill the final node's Δ-channel from the field
    let idx = traj.grid.len() - 1;
    let t = traj.grid[idx].t;
    let (xd, yd) = rhs(ts, net, &traj, t)?;
    for (i, d) in xd.iter().enumerate() {
        traj.x_delta[i][idx] = *d;
    }
    for (j, d) in yd.iter().enumerate() {
        traj.y_delta[j][idx] = *d;
    }
    Ok(traj)
}

/// Weight for the ergodic diagnostics; `bounded_admissible` weights
/// must stay bounded away from zero on the scan window.
#[derive(Debug, Clone)]
pub struct WeightFunction {
    pub expr: Expr,
    pub kind: WeightKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    BoundedAdmissible,
    General,
}

impl WeightFunction {
    pub fn validate(&self, ts: &TimeScale, window: (f64, f64)) -> Result<(), SimError> {
        let pts = ts.enumerate_grid(window.0, window.1)?;
        let mut inf = f64::INFINITY;
        for gp in &pts {
            let v = self.expr.eval(gp.t)?;
            if v <= 0.0 {
                return Err(SimError::NonPositiveWeight { t: gp.t });
            }
            inf = inf.min(v);
        }
        if self.kind == WeightKind::BoundedAdmissible && inf <= 1e-12 {
            return Err(SimError::NonPositiveWeight { t: window.1 });
        }
        Ok(())
    }
}

/// Exponent p ≥ 1 and window length l > 0 of the windowed-mean norm.
#[derive(Debug, Clone, Copy)]
pub struct StepanovParams {
    pub p: f64,
    pub l: f64,
}

/// sup over translates t in the window of
/// (1/l · ∫_t^{t+l} |f|^p Δs)^{1/p}, translates taken on the
/// enumeration grid of [window.0, window.1 − l].
pub fn stepanov_norm<F: FnMut(f64) -> f64>(
    ts: &TimeScale,
    mut f: F,
    params: StepanovParams,
    window: (f64, f64),
) -> Result<f64, SimError> {
    assert!(params.p >= 1.0 && params.l > 0.0, "invalid Stepanov parameters");
    let translates = ts.enumerate_grid(window.0, window.1 - params.l)?;
    let mut sup: f64 = 0.0;
    for gp in &translates {
        let mean = ts.delta_integral(|s| f(s).abs().powf(params.p), gp.t, gp.t + params.l)?
            / params.l;
        sup = sup.max(mean.powf(1.0 / params.p));
    }
    Ok(sup)
}

/// Weighted Δ-measure of Q_r = [t0 − r, t0 + r] and the relative
/// weighted mean of |f| over it: (m_r, w_r).
pub fn ergodic_mean<F: FnMut(f64) -> f64>(
    ts: &TimeScale,
    mut f: F,
    nu: &WeightFunction,
    t0: f64,
    r: f64,
) -> Result<(f64, f64), SimError> {
    assert!(r > 0.0, "radius must be positive");
    let (a, b) = (t0 - r, t0 + r);
    let m_r = ts.try_delta_integral(
        |s| {
            let v = nu.expr.eval(s)?;
            if v <= 0.0 {
                return Err(SimError::NonPositiveWeight { t: s });
            }
            Ok(v)
        },
        a,
        b,
    ).map_err(|e| match e {
        crate::timescale::IntegralError::Scale(s) => SimError::Scale(s),
        crate::timescale::IntegralError::Eval(e) => e,
    })?;
    if m_r <= 0.0 {
        return Err(SimError::ZeroMeasureWindow { from: a, to: b });
    }
    let weighted = ts.try_delta_integral(
        |s| Ok::<f64, ExprError>(f(s).abs() * nu.expr.eval(s)?),
        a,
        b,
    ).map_err(|e| match e {
        crate::timescale::IntegralError::Scale(s) => SimError::Scale(s),
        crate::timescale::IntegralError::Eval(e) => SimError::Expr(e),
    })?;
    Ok((m_r, weighted / m_r))
}

/// The ergodic profile r ↦ w_r; a decreasing profile toward zero is the
/// numeric shadow of weighted pseudo almost automorphy of the residual.
pub fn wpaa0_profile<F: FnMut(f64) -> f64>(
    ts: &TimeScale,
    mut f: F,
    nu: &WeightFunction,
    t0: f64,
    r_list: &[f64],
) -> Result<Vec<(f64, f64)>, SimError> {
    let mut out = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let (_, w_r) = ergodic_mean(ts, &mut f, nu, t0, r)?;
        out.push((r, w_r));
    }
    Ok(out)
}
