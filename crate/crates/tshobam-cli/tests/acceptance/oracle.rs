//! Independent oracles for the acceptance suite.
//!
//! Everything in this module is deliberately written from the problem
//! statement alone, with its own plain-array data layout and its own
//! summation loops. It shares no code with the library under test, so an
//! agreement check between the two is meaningful. The frozen constant
//! tables were computed with an external calculator and must not be
//! regenerated from library output.

/// Scanned coefficient bounds as plain arrays, sized for an n-by-m network.
/// `d_*` families are n x m, `t_sup` is n x m x m, `t_bar_sup` is m x n x n.
pub struct OracleBounds {
    pub n: usize,
    pub m: usize,
    pub alpha_sup: Vec<f64>,
    pub alpha_inf: Vec<f64>,
    pub c_sup: Vec<f64>,
    pub c_inf: Vec<f64>,
    pub d_sup: Vec<Vec<f64>>,
    pub d_tau_sup: Vec<Vec<f64>>,
    pub d_bar_sup: Vec<Vec<f64>>,
    pub d_tilde_sup: Vec<Vec<f64>>,
    pub e_sup: Vec<Vec<f64>>,
    pub e_tau_sup: Vec<Vec<f64>>,
    pub e_bar_sup: Vec<Vec<f64>>,
    pub e_tilde_sup: Vec<Vec<f64>>,
    pub t_sup: Vec<Vec<Vec<f64>>>,
    pub t_bar_sup: Vec<Vec<Vec<f64>>>,
    pub eta_sup: Vec<f64>,
    pub varsigma_sup: Vec<f64>,
    pub sigma_sup: Vec<Vec<f64>>,
    pub xi_sup: Vec<Vec<f64>>,
    pub input_x_sup: Vec<f64>,
    pub input_y_sup: Vec<f64>,
}

pub struct OracleConstants {
    pub m_i: Vec<f64>,
    pub m_bar_i: Vec<f64>,
    pub n_j: Vec<f64>,
    pub n_bar_j: Vec<f64>,
}

/// Direct summation of the contraction-constant families from scanned
/// bounds. `lip[k]` is the activation Lipschitz constant for source
/// component k, `f0` = |f(0)|, `r` the candidate radius.
pub fn h3_constants_oracle(b: &OracleBounds, lip: &[f64], f0: f64, r: f64) -> OracleConstants {
    let gain = |k: usize| lip[k] * r + f0;
    let mut m_i = Vec::with_capacity(b.n);
    let mut m_bar_i = Vec::with_capacity(b.n);
    for i in 0..b.n {
        let mut m = b.alpha_sup[i] * b.eta_sup[i] * r;
        let mut mb = b.alpha_sup[i] * b.eta_sup[i];
        for j in 0..b.m {
            let fam = b.d_sup[i][j]
                + b.d_tau_sup[i][j]
                + b.d_bar_sup[i][j] * b.sigma_sup[i][j]
                + b.d_tilde_sup[i][j] * b.xi_sup[i][j];
            m += fam * gain(j);
            mb += fam * lip[j];
        }
        for j in 0..b.m {
            for k in 0..b.m {
                m += b.t_sup[i][j][k] * gain(k) * gain(j);
                mb += (b.t_sup[i][j][k] + b.t_sup[i][k][j]) * gain(k);
            }
        }
        m += b.input_x_sup[i];
        m_i.push(m);
        m_bar_i.push(mb);
    }
    let mut n_j = Vec::with_capacity(b.m);
    let mut n_bar_j = Vec::with_capacity(b.m);
    for j in 0..b.m {
        let mut nv = b.c_sup[j] * b.varsigma_sup[j] * r;
        let mut nb = b.c_sup[j] * b.varsigma_sup[j];
        for i in 0..b.n {
            let fam = b.e_sup[i][j]
                + b.e_tau_sup[i][j]
                + b.e_bar_sup[i][j] * b.sigma_sup[i][j]
                + b.e_tilde_sup[i][j] * b.xi_sup[i][j];
            nv += fam * gain(i);
            nb += fam * lip[i];
        }
        for i in 0..b.n {
            for k in 0..b.n {
                nv += b.t_bar_sup[j][i][k] * gain(k) * gain(i);
                nb += (b.t_bar_sup[j][i][k] + b.t_bar_sup[j][k][i]) * gain(k);
            }
        }
        nv += b.input_y_sup[j];
        n_j.push(nv);
        n_bar_j.push(nb);
    }
    OracleConstants { m_i, m_bar_i, n_j, n_bar_j }
}

/// The two hypothesis maxima: (max compared to r, max compared to 1).
pub fn h3_maxima_oracle(b: &OracleBounds, c: &OracleConstants) -> (f64, f64) {
    let mut lhs_r = f64::NEG_INFINITY;
    let mut lhs_1 = f64::NEG_INFINITY;
    for i in 0..b.n {
        let blow = 1.0 + b.alpha_sup[i] / b.alpha_inf[i];
        lhs_r = lhs_r.max(c.m_i[i] / b.alpha_inf[i]).max(blow * c.m_i[i]);
        lhs_1 = lhs_1.max(c.m_bar_i[i] / b.alpha_inf[i]).max(blow * c.m_bar_i[i]);
    }
    for j in 0..b.m {
        let blow = 1.0 + b.c_sup[j] / b.c_inf[j];
        lhs_r = lhs_r.max(c.n_j[j] / b.c_inf[j]).max(blow * c.n_j[j]);
        lhs_1 = lhs_1.max(c.n_bar_j[j] / b.c_inf[j]).max(blow * c.n_bar_j[j]);
    }
    (lhs_r, lhs_1)
}

/// Printed reference constants from the source material's worked example
/// (known to contain internal arithmetic inconsistencies; recorded as
/// deltas only, never asserted).
pub const REFERENCE_M: [f64; 3] = [0.119, 0.52, 0.12];
pub const REFERENCE_M_BAR: [f64; 3] = [0.139, 0.069, 0.0136];
pub const REFERENCE_N: [f64; 2] = [0.343, 0.213];
pub const REFERENCE_N_BAR: [f64; 2] = [0.65, 0.343];
pub const REFERENCE_R: f64 = 0.43;

/// A delayed recurrence network with constant coefficients on the integer
/// grid (step 1). All arrays plain; layout mirrors OracleBounds.
pub struct RecurrenceNet {
    pub n: usize,
    pub m: usize,
    pub alpha: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<Vec<f64>>,
    pub d_tau: Vec<Vec<f64>>,
    pub d_bar: Vec<Vec<f64>>,
    pub d_tilde: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub e_tau: Vec<Vec<f64>>,
    pub e_bar: Vec<Vec<f64>>,
    pub e_tilde: Vec<Vec<f64>>,
    pub t2: Vec<Vec<Vec<f64>>>,
    pub t2_bar: Vec<Vec<Vec<f64>>>,
    pub input_x: Vec<f64>,
    pub input_y: Vec<f64>,
    pub eta: Vec<f64>,
    pub varsigma: Vec<f64>,
    pub tau: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
    pub chi: Vec<f64>,
}

/// Activation shared by the randomized recurrence networks.
pub fn act(u: f64) -> f64 {
    0.1 * u.atan()
}

/// Integer-grid history: values at k = lo ..= hi, one row per time point.
pub struct RecurrenceHistory {
    pub lo: i64,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub xd: Vec<Vec<f64>>,
    pub yd: Vec<Vec<f64>>,
}

impl RecurrenceHistory {
    fn idx(&self, k: i64) -> usize {
        (k - self.lo) as usize
    }
}

/// Marches the delayed recurrence `steps` times starting at t = 0 and
/// returns the extended history. Backward projection on the integer grid
/// is floor; the window integral from a to b sums the integrand over
/// integer s with ceil(a) <= s < b.
pub fn recurrence_oracle(net: &RecurrenceNet, init: &RecurrenceHistory, steps: usize) -> RecurrenceHistory {
    let mut h = RecurrenceHistory {
        lo: init.lo,
        x: init.x.clone(),
        y: init.y.clone(),
        xd: init.xd.clone(),
        yd: init.yd.clone(),
    };
    let pb = |u: f64| u.floor() as i64;
    for step in 0..=steps {
        let k = step as i64;
        let ki = h.idx(k);
        let kf = k as f64;
        let mut xd = vec![0.0; net.n];
        let mut yd = vec![0.0; net.m];
        for i in 0..net.n {
            let mut v = -net.alpha[i] * h.x[h.idx(pb(kf - net.eta[i]))][i];
            for j in 0..net.m {
                v += net.d[i][j] * act(h.y[ki][j]);
                v += net.d_tau[i][j] * act(h.y[h.idx(pb(kf - net.tau[i][j]))][j]);
                let mut s1 = 0.0;
                let mut s = (kf - net.sigma[i][j]).ceil() as i64;
                while s < k {
                    s1 += act(h.y[h.idx(s)][j]);
                    s += 1;
                }
                v += net.d_bar[i][j] * s1;
                let mut s2 = 0.0;
                let mut s = (kf - net.xi[i][j]).ceil() as i64;
                while s < k {
                    s2 += act(h.yd[h.idx(s)][j]);
                    s += 1;
                }
                v += net.d_tilde[i][j] * s2;
            }
            for j in 0..net.m {
                for k2 in 0..net.m {
                    v += net.t2[i][j][k2]
                        * act(h.y[h.idx(pb(kf - net.chi[k2]))][k2])
                        * act(h.y[h.idx(pb(kf - net.chi[j]))][j]);
                }
            }
            v += net.input_x[i];
            xd[i] = v;
        }
        for j in 0..net.m {
            let mut v = -net.c[j] * h.y[h.idx(pb(kf - net.varsigma[j]))][j];
            for i in 0..net.n {
                v += net.e[i][j] * act(h.x[ki][i]);
                v += net.e_tau[i][j] * act(h.x[h.idx(pb(kf - net.tau[i][j]))][i]);
                let mut s1 = 0.0;
                let mut s = (kf - net.sigma[i][j]).ceil() as i64;
                while s < k {
                    s1 += act(h.x[h.idx(s)][i]);
                    s += 1;
                }
                v += net.e_bar[i][j] * s1;
                let mut s2 = 0.0;
                let mut s = (kf - net.xi[i][j]).ceil() as i64;
                while s < k {
                    s2 += act(h.xd[h.idx(s)][i]);
                    s += 1;
                }
                v += net.e_tilde[i][j] * s2;
            }
            for i in 0..net.n {
                for k2 in 0..net.n {
                    v += net.t2_bar[j][i][k2]
                        * act(h.x[h.idx(pb(kf - net.chi[k2]))][k2])
                        * act(h.x[h.idx(pb(kf - net.chi[i]))][i]);
                }
            }
            v += net.input_y[j];
            yd[j] = v;
        }
        h.xd[ki] = xd.clone();
        h.yd[ki] = yd.clone();
        if step < steps {
            let xn: Vec<f64> = (0..net.n).map(|i| h.x[ki][i] + xd[i]).collect();
            let yn: Vec<f64> = (0..net.m).map(|j| h.y[ki][j] + yd[j]).collect();
            h.x.push(xn);
            h.y.push(yn);
            h.xd.push(vec![0.0; net.n]);
            h.yd.push(vec![0.0; net.m]);
        }
    }
    h
}

/// Hand-computed evaluation table for the expression language:
/// (source, argument, expected value). Frozen from an external calculator.
pub const EVAL_TABLE: [(&str, f64, f64); 20] = [
    ("0.1*arctan(t)", 1.0, 0.078539816339744828),
    ("0.73+0.02*sin(1/(2+cos(t)+cos(sqrt(2)*t)))", 0.0, 0.73494807918509042),
    ("sin(t)/20", 0.5, 0.023971276930210152),
    ("exp(-t^4*cos(t)^2)", 1.0, 0.74682336444270669),
    ("2^3^2", 0.0, 512.0),
    ("-t^2", 3.0, -9.0),
    ("(-t)^2", 3.0, 9.0),
    ("1/(2+sin(t)+sin(sqrt(2)*t))", 2.0, 0.310812949156268),
    ("abs(-3.5*t)", 2.0, 7.0),
    ("sqrt(t^2+1)", 2.0, 2.2360679774997898),
    ("ln(exp(t))", 5.0, 5.0),
    ("pi", 0.0, 3.1415926535897931),
    ("cos(pi*t)", 1.0, -1.0),
    ("tan(t)", 0.3, 0.30933624960962325),
    ("t^0.5", 9.0, 3.0),
    ("0^0", 0.0, 1.0),
    ("2*t+3*t^2-4", 2.0, 12.0),
    ("0.02*sin(sqrt(2)*t)+exp(-t^2*sin(t)^4)", 1.0, 0.62545683276569486),
    ("1-2-3", 0.0, -4.0),
    ("8/4/2", 0.0, 1.0),
];

/// Closed form for the ergodic mean of e^{-|t|} with unit weight centred
/// at 0: w_r = (1 - e^{-r}) / r.
pub fn ergodic_exp_abs(r: f64) -> f64 {
    (1.0 - (-r).exp()) / r
}

/// Exact polynomial integral on the reals over [a, b].
pub fn poly_integral_exact(coeffs: &[f64], a: f64, b: f64) -> f64 {
    let anti = |u: f64| {
        let mut acc = 0.0;
        for (p, &cc) in coeffs.iter().enumerate() {
            acc += cc * u.powi(p as i32 + 1) / (p as f64 + 1.0);
        }
        acc
    };
    anti(b) - anti(a)
}

/// Finite left sum of a polynomial over integer points a ..= b-1,
/// the exact grid integral on the unit-step scale.
pub fn poly_grid_sum(coeffs: &[f64], a: i64, b: i64) -> f64 {
    let eval = |u: f64| {
        let mut acc = 0.0;
        for (p, &cc) in coeffs.iter().enumerate() {
            acc += cc * u.powi(p as i32);
        }
        acc
    };
    let mut acc = 0.0;
    let mut k = a;
    while k < b {
        acc += eval(k as f64);
        k += 1;
    }
    acc
}

/// Product recurrence for the scale exponential on a uniform grid:
/// product of (1 + h * p(t_k)) over the marched points.
pub fn grid_exp_product(p: &dyn Fn(f64) -> f64, h: f64, s: f64, t: f64) -> f64 {
    let mut acc = 1.0;
    let mut u = s;
    while u < t - 0.5 * h {
        acc *= 1.0 + h * p(u);
        u += h;
    }
    acc
}
