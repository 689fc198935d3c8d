//! Computable time-scale calculus.
//!
//! A time scale is a nonempty closed subset of the reals; this module
//! implements three concrete families with decidable membership and exact
//! graininess, together with the calculus the rest of the crate is built
//! on: jump operators, Δ-integration, Δ-differentiation, regressivity
//! classification, and the time-scale exponential.
//!
//! Conventions:
//! * Integral endpoints project to the nearest scale point from above
//!   (`project_forward`), so a window that starts inside a gap shrinks.
//! * Delayed-argument lookups elsewhere in the crate project from below
//!   (`project_backward`), so histories are never read ahead of time.
//! * Continuum segments are sampled on the global lattice
//!   `{k·resolution : k ∈ ℤ}` plus exact window and segment endpoints.
//!   Anchoring the lattice globally (rather than per call) is what makes
//!   quadrature additive and the exponential's semigroup law hold to
//!   far below the crate's 1e-9 verification tolerances.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaleError {
    #[error("t = {t} is not a point of the time scale")]
    NotInScale { t: f64 },
    #[error("the time scale has no points in [{from}, {to}]")]
    EmptyWindow { from: f64, to: f64 },
    #[error("1 + graininess*p vanishes at t = {t}")]
    NonRegressive { t: f64 },
}

/// The three supported families. `PeriodicUnion` is
/// ⋃ₖ [anchor + k(a+g), anchor + k(a+g) + a] for on-length a and gap g;
/// a = 0 degenerates to a grid of isolated points, g = 0 to the continuum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleKind {
    Continuum,
    UniformGrid { step: f64 },
    PeriodicUnion { on_length: f64, gap: f64, anchor: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct TimeScale {
    kind: ScaleKind,
    resolution: f64,
}

/// One enumerated point of the scale. `is_right_scattered` is a property
/// of the scale at `t` (graininess > 0), not of the enumeration window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub t: f64,
    pub is_right_scattered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regressivity {
    Regressive,
    PositivelyRegressive,
    Neither,
}

/// Absolute snap tolerance for membership and endpoint matching at t.
fn tol_at(t: f64) -> f64 {
    1e-9 * t.abs().max(1.0)
}

impl TimeScale {
    pub fn continuum(resolution: f64) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        TimeScale { kind: ScaleKind::Continuum, resolution }
    }

    pub fn uniform_grid(step: f64) -> Self {
        assert!(step > 0.0, "grid step must be positive");
        TimeScale { kind: ScaleKind::UniformGrid { step }, resolution: step }
    }

    pub fn periodic_union(on_length: f64, gap: f64, anchor: f64, resolution: f64) -> Self {
        assert!(on_length >= 0.0 && gap >= 0.0, "segment lengths must be nonnegative");
        assert!(on_length + gap > 0.0, "degenerate period");
        assert!(resolution > 0.0, "resolution must be positive");
        TimeScale { kind: ScaleKind::PeriodicUnion { on_length, gap, anchor }, resolution }
    }

    pub fn kind(&self) -> ScaleKind {
        self.kind
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Same scale points, different continuum sampling density.
    pub fn with_resolution(&self, resolution: f64) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        TimeScale { kind: self.kind, resolution }
    }

    /// Exact supremum of the graininess, available per family without
    /// any scanning: 0, the grid step, or the gap length.
    pub fn graininess_sup(&self) -> f64 {
        match self.kind {
            ScaleKind::Continuum => 0.0,
            ScaleKind::UniformGrid { step } => step,
            ScaleKind::PeriodicUnion { gap, .. } => gap,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        match self.kind {
            ScaleKind::Continuum => true,
            ScaleKind::UniformGrid { step } => {
                let k = (t / step).round();
                (t - k * step).abs() <= tol_at(t)
            }
            ScaleKind::PeriodicUnion { on_length: a, gap: g, anchor } => {
                if g == 0.0 {
                    return true;
                }
                let p = a + g;
                let k = ((t - anchor) / p).floor();
                let off = t - anchor - k * p;
                off <= a + tol_at(t) || off >= p - tol_at(t)
            }
        }
    }

    /// σ(t) = inf{s ∈ 𝕋 : s > t}; equals t at right-dense points.
    pub fn forward_jump(&self, t: f64) -> Result<f64, ScaleError> {
        if !self.contains(t) {
            return Err(ScaleError::NotInScale { t });
        }
        Ok(match self.kind {
            ScaleKind::Continuum => t,
            ScaleKind::UniformGrid { step } => ((t / step).round() + 1.0) * step,
            ScaleKind::PeriodicUnion { on_length: a, gap: g, anchor } => {
                if g == 0.0 {
                    return Ok(t);
                }
                let p = a + g;
                let mut k = ((t - anchor) / p).floor();
                let mut off = t - anchor - k * p;
                if off >= p - tol_at(t) {
                    k += 1.0;
                    off = 0.0;
                }
                if (off - a).abs() <= tol_at(t) {
                    // right endpoint of a segment (all points when a = 0)
                    anchor + (k + 1.0) * p
                } else {
                    t
                }
            }
        })
    }

    /// μ(t) = σ(t) − t, computed per family to avoid cancellation.
    pub fn graininess(&self, t: f64) -> Result<f64, ScaleError> {
        if !self.contains(t) {
            return Err(ScaleError::NotInScale { t });
        }
        Ok(match self.kind {
            ScaleKind::Continuum => 0.0,
            ScaleKind::UniformGrid { step } => step,
            ScaleKind::PeriodicUnion { on_length: a, gap: g, anchor } => {
                if g == 0.0 {
                    return Ok(0.0);
                }
                let p = a + g;
                let k = ((t - anchor) / p).floor();
                let mut off = t - anchor - k * p;
                if off >= p - tol_at(t) {
                    off = 0.0;
                }
                if (off - a).abs() <= tol_at(t) { g } else { 0.0 }
            }
        })
    }

    /// sup{s ∈ 𝕋 : s ≤ t}. Total for these bi-infinite families.
    pub fn project_backward(&self, t: f64) -> f64 {
        match self.kind {
            ScaleKind::Continuum => t,
            ScaleKind::UniformGrid { step } => {
                let k = (t / step).round();
                if (t - k * step).abs() <= tol_at(t) {
                    k * step
                } else {
                    (t / step).floor() * step
                }
            }
            ScaleKind::PeriodicUnion { on_length: a, gap: g, anchor } => {
                if g == 0.0 {
                    return t;
                }
                let p = a + g;
                let k = ((t - anchor) / p).floor();
                let off = t - anchor - k * p;
                if off >= p - tol_at(t) {
                    anchor + (k + 1.0) * p
                } else if off <= a {
                    t
                } else {
                    anchor + k * p + a
                }
            }
        }
    }

    /// inf{s ∈ 𝕋 : s ≥ t}, the integral-endpoint convention.
    pub fn project_forward(&self, t: f64) -> f64 {
        match self.kind {
            ScaleKind::Continuum => t,
            ScaleKind::UniformGrid { step } => {
                let k = (t / step).round();
                if (t - k * step).abs() <= tol_at(t) {
                    k * step
                } else {
                    (t / step).ceil() * step
                }
            }
            ScaleKind::PeriodicUnion { on_length: a, gap: g, anchor } => {
                if g == 0.0 {
                    return t;
                }
                let p = a + g;
                let k = ((t - anchor) / p).floor();
                let off = t - anchor - k * p;
                if off >= p - tol_at(t) || off <= a + tol_at(t) {
                    t
                } else {
                    anchor + (k + 1.0) * p
                }
            }
        }
    }

    /// Bounds of the maximal dense segment containing the right-dense
    /// point `t` (continuum: unbounded; grid: degenerate).
    pub(crate) fn segment_bounds(&self, t: f64) -> (f64, f64) {
        match self.kind {
            ScaleKind::Continuum => (f64::NEG_INFINITY, f64::INFINITY),
            ScaleKind::UniformGrid { .. } => (t, t),
            ScaleKind::PeriodicUnion { on_length: a, gap: g, anchor } => {
                if g == 0.0 {
                    return (f64::NEG_INFINITY, f64::INFINITY);
                }
                let p = a + g;
                let mut k = ((t - anchor) / p).floor();
                if t - anchor - k * p >= p - tol_at(t) {
                    k += 1.0;
                }
                (anchor + k * p, anchor + k * p + a)
            }
        }
    }

    /// Monotone list of scale points in [from, to], continuum segments
    /// sampled on the global resolution lattice, each right-scattered
    /// point included exactly once with its true graininess.
    pub fn enumerate_grid(&self, from: f64, to: f64) -> Result<Vec<GridPoint>, ScaleError> {
        let lo = self.project_forward(from);
        let hi = self.project_backward(to);
        if lo > hi + tol_at(hi) {
            return Err(ScaleError::EmptyWindow { from, to });
        }
        let mut pts = Vec::new();
        if hi - lo <= tol_at(hi) {
            pts.push(GridPoint { t: lo, is_right_scattered: self.graininess(lo).unwrap_or(0.0) > 0.0 });
            return Ok(pts);
        }
        match self.kind {
            ScaleKind::Continuum => {
                self.sample_dense(lo, hi, false, &mut pts);
            }
            ScaleKind::UniformGrid { step } => {
                let k_lo = (lo / step).round() as i64;
                let k_hi = (hi / step).round() as i64;
                for k in k_lo..=k_hi {
                    pts.push(GridPoint { t: k as f64 * step, is_right_scattered: true });
                }
            }
            ScaleKind::PeriodicUnion { on_length: a, gap: g, anchor } => {
                if g == 0.0 {
                    self.sample_dense(lo, hi, false, &mut pts);
                    return Ok(pts);
                }
                let p = a + g;
                let mut k = ((lo - anchor) / p).floor();
                if lo - anchor - k * p >= p - tol_at(lo) {
                    k += 1.0;
                }
                loop {
                    let seg_start = anchor + k * p;
                    if seg_start > hi + tol_at(hi) {
                        break;
                    }
                    let seg_end = seg_start + a;
                    if a == 0.0 {
                        if seg_start >= lo - tol_at(seg_start) {
                            pts.push(GridPoint { t: seg_start, is_right_scattered: true });
                        }
                    } else {
                        let w_lo = seg_start.max(lo);
                        let w_hi = seg_end.min(hi);
                        if w_hi >= w_lo - tol_at(w_hi) {
                            // the segment end is scattered only when it is
                            // a true segment boundary inside the window
                            let ends_scattered = (w_hi - seg_end).abs() <= tol_at(seg_end);
                            self.sample_dense(w_lo, w_hi, ends_scattered, &mut pts);
                        }
                    }
                    k += 1.0;
                }
                if pts.is_empty() {
                    return Err(ScaleError::EmptyWindow { from, to });
                }
            }
        }
        Ok(pts)
    }

    /// Push [lo, hi] sampled on the global lattice; lattice points too
    /// close to either boundary are dropped so no cell degenerates.
    fn sample_dense(&self, lo: f64, hi: f64, last_scattered: bool, pts: &mut Vec<GridPoint>) {
        let res = self.resolution;
        let min_sep = res * 1e-6;
        if hi - lo <= min_sep {
            pts.push(GridPoint { t: lo, is_right_scattered: last_scattered });
            return;
        }
        pts.push(GridPoint { t: lo, is_right_scattered: false });
        let mut k = (lo / res).floor() + 1.0;
        loop {
            let u = k * res;
            if u >= hi - min_sep {
                break;
            }
            if u > lo + min_sep {
                pts.push(GridPoint { t: u, is_right_scattered: false });
            }
            k += 1.0;
        }
        pts.push(GridPoint { t: hi, is_right_scattered: last_scattered });
    }

    /// Δ-integral of `f` over [a, b] with both endpoints projected
    /// forward: scattered points contribute f(t)·μ(t), dense cells are
    /// integrated by the trapezoid rule on the enumeration lattice.
    pub fn delta_integral<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> Result<f64, ScaleError> {
        self.try_delta_integral::<_, std::convert::Infallible>(|t| Ok(f(t)), a, b)
            .map_err(|e| match e {
                IntegralError::Scale(s) => s,
                IntegralError::Eval(never) => match never {},
            })
    }

    /// Fallible-integrand form of `delta_integral`.
    pub fn try_delta_integral<F, E>(&self, mut f: F, a: f64, b: f64) -> Result<f64, IntegralError<E>>
    where
        F: FnMut(f64) -> Result<f64, E>,
    {
        let lo = self.project_forward(a);
        let hi = self.project_forward(b);
        if lo > hi + tol_at(hi) {
            if !self.contains(a) && self.project_backward(b) < a {
                return Err(IntegralError::Scale(ScaleError::EmptyWindow { from: a, to: b }));
            }
            return Ok(0.0);
        }
        if hi - lo <= 0.0 {
            return Ok(0.0);
        }
        let pts = self.enumerate_grid(lo, hi).map_err(IntegralError::Scale)?;
        let mut acc = 0.0;
        let mut prev: Option<(GridPoint, f64)> = None;
        for gp in pts {
            let fv = f(gp.t).map_err(IntegralError::Eval)?;
            if let Some((u, fu)) = prev {
                if u.is_right_scattered {
                    let mu = self.graininess(u.t).map_err(IntegralError::Scale)?;
                    // the cell [u, σ(u)) contributes exactly f(u)·μ(u)
                    acc += fu * mu;
                } else {
                    acc += 0.5 * (fu + fv) * (gp.t - u.t);
                }
            }
            prev = Some((gp, fv));
        }
        Ok(acc)
    }

    /// Δ-derivative at t: difference quotient across the jump when t is
    /// right-scattered, otherwise a finite difference with step
    /// `resolution` clipped to the containing dense segment.
    pub fn delta_derivative<F: FnMut(f64) -> f64>(&self, mut f: F, t: f64) -> Result<f64, ScaleError> {
        if !self.contains(t) {
            return Err(ScaleError::NotInScale { t });
        }
        let mu = self.graininess(t)?;
        if mu > 0.0 {
            let s = self.forward_jump(t)?;
            return Ok((f(s) - f(t)) / mu);
        }
        let res = self.resolution;
        let (seg_lo, seg_hi) = self.segment_bounds(t);
        let h_plus = res.min(seg_hi - t);
        let h_minus = res.min(t - seg_lo);
        let near = |x: f64| x >= res * (1.0 - 1e-9);
        if near(h_plus) && near(h_minus) {
            Ok((f(t + res) - f(t - res)) / (2.0 * res))
        } else if h_plus > 0.0 && h_minus > 0.0 {
            let h = h_plus.min(h_minus);
            Ok((f(t + h) - f(t - h)) / (2.0 * h))
        } else if h_plus > 0.0 {
            Ok((f(t + h_plus) - f(t)) / h_plus)
        } else if h_minus > 0.0 {
            Ok((f(t) - f(t - h_minus)) / h_minus)
        } else {
            Err(ScaleError::NotInScale { t })
        }
    }

    /// Classifies 1 + μ(t)p(t) over the sampled window.
    pub fn is_regressive<F: FnMut(f64) -> f64>(
        &self,
        mut p: F,
        window: (f64, f64),
    ) -> Result<Regressivity, ScaleError> {
        let pts = self.enumerate_grid(window.0, window.1)?;
        let mut all_positive = true;
        for gp in &pts {
            if !gp.is_right_scattered {
                continue;
            }
            let mu = self.graininess(gp.t)?;
            let v = 1.0 + mu * p(gp.t);
            if v.abs() < 1e-12 {
                return Ok(Regressivity::Neither);
            }
            if v <= 0.0 {
                all_positive = false;
            }
        }
        Ok(if all_positive { Regressivity::PositivelyRegressive } else { Regressivity::Regressive })
    }

    /// ⊖p: t ↦ −p(t) / (1 + μ(t)p(t)), defined on scale points.
    pub fn circle_minus<'a, F: Fn(f64) -> f64 + 'a>(&'a self, p: F) -> impl Fn(f64) -> f64 + 'a {
        move |t: f64| {
            let mu = self.graininess(t).unwrap_or(0.0);
            -p(t) / (1.0 + mu * p(t))
        }
    }

    /// Time-scale exponential e_p(t, s): marched product of (1 + μp)
    /// factors across scattered points and exp(∫p) across dense cells.
    /// For t < s returns 1 / e_p(s, t).
    pub fn ts_exp<F: FnMut(f64) -> f64>(&self, mut p: F, t: f64, s: f64) -> Result<f64, ScaleError> {
        if !self.contains(t) {
            return Err(ScaleError::NotInScale { t });
        }
        if !self.contains(s) {
            return Err(ScaleError::NotInScale { t: s });
        }
        if (t - s).abs() <= tol_at(t) {
            return Ok(1.0);
        }
        if t < s {
            let fwd = self.ts_exp(p, s, t)?;
            if fwd == 0.0 {
                return Err(ScaleError::NonRegressive { t: s });
            }
            return Ok(1.0 / fwd);
        }
        let pts = self.enumerate_grid(s, t)?;
        let mut acc = 1.0;
        let mut prev: Option<(GridPoint, f64)> = None;
        for gp in pts {
            let pv = p(gp.t);
            if let Some((u, pu)) = prev {
                if u.is_right_scattered {
                    let mu = self.graininess(u.t)?;
                    let factor = 1.0 + mu * pu;
                    if factor.abs() < 1e-14 {
                        return Err(ScaleError::NonRegressive { t: u.t });
                    }
                    acc *= factor;
                } else {
                    acc *= (0.5 * (pu + pv) * (gp.t - u.t)).exp();
                }
            }
            prev = Some((gp, pv));
        }
        Ok(acc)
    }
}

/// Error from a fallible-integrand Δ-integral.
#[derive(Debug)]
pub enum IntegralError<E> {
    Scale(ScaleError),
    Eval(E),
}
