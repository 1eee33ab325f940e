//! Travelling-front profiles in the comoving frame `ξ = x − c t`.
//!
//! Profiles are steady states of `U_τ = U_ξξ + c U_ξ + F(U)` on a bounded
//! ξ-interval (Neumann on the left, the invaded state imposed on the right),
//! reached by pseudo-transient continuation: linearly implicit Euler steps
//! whose pseudo time step grows as the residual falls, so the iteration
//! starts as a time integration and ends as Newton's method.
//!
//! Translation is frozen: an unknown drift `s` is added to the speed and the
//! phase condition `u(0) = 1/2` closes the system. At a converged profile `s`
//! measures how far `c` is from the speed the truncated problem selects.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Banded;
use crate::model::{
    jacobian, predicted_speeds, reaction_f, reaction_g, slow_manifold_v, JacobianForm, ModelParams,
};
use crate::pde::Grid1D;

/// Pseudo-time convergence threshold on `‖ΔU‖∞ / Δτ`.
pub const RELAX_TOL: f64 = 1e-6;
pub const MAX_RELAX_ITER: usize = 5000;
/// Drift speeds above this mean `c` is not the selected speed.
pub const MAX_DRIFT: f64 = 1e-2;
/// Profiles below this level are not checked for sign or monotonicity.
pub const PROFILE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveKind {
    ReducedKpp,
    SecondaryCsc,
    PrimaryCsc,
}

/// Scalar reactions for reduced fronts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarReaction {
    /// `f(u, v_α(u))` on the slow manifold.
    Reduced { alpha: f64 },
    /// `u (1 − u)`, the classical Fisher-KPP benchmark.
    Logistic,
}

impl ScalarReaction {
    /// Value and derivative.
    pub(crate) fn eval(&self, u: f64) -> (f64, f64) {
        match *self {
            ScalarReaction::Logistic => (u * (1.0 - u), 1.0 - 2.0 * u),
            ScalarReaction::Reduced { alpha } => {
                // below u = 0 the manifold is continued by its value at 0
                let w = u.max(0.0);
                let v = slow_manifold_v(w, alpha).unwrap_or(0.0);
                let s = w + v;
                let g_u = 1.0 - 2.0 * s;
                let g_v = g_u - alpha;
                let dv = if u > 0.0 && g_v != 0.0 {
                    -g_u / g_v
                } else {
                    0.0
                };
                (reaction_f(u, v), 1.0 - 2.0 * u - v - u * dv)
            }
        }
    }

    fn v_of(&self, u: f64) -> f64 {
        match *self {
            ScalarReaction::Logistic => 0.0,
            ScalarReaction::Reduced { alpha } => {
                slow_manifold_v(u.clamp(0.0, 1.0), alpha).unwrap_or(0.0)
            }
        }
    }

    /// `f'(0)`.
    pub fn linear_rate(&self) -> f64 {
        self.eval(0.0).1
    }
}

#[derive(Debug, Clone, Copy)]
enum System {
    Scalar(ScalarReaction),
    Full(ModelParams),
}

impl System {
    fn m(&self) -> usize {
        match self {
            System::Scalar(_) => 1,
            System::Full(_) => 2,
        }
    }

    /// Reaction values and Jacobian rows at node values `x`.
    fn reaction(&self, x: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
        match self {
            System::Scalar(r) => {
                let (f, df) = r.eval(x[0]);
                ([f, 0.0], [[df, 0.0], [0.0, 0.0]])
            }
            System::Full(p) => {
                let (u, v) = (x[0], x[1]);
                let j = jacobian(u, v, p, JacobianForm::DividedByEps).matrix;
                (
                    [reaction_f(u, v), reaction_g(u, v, p, false) / p.eps()],
                    [[j[(0, 0)], j[(0, 1)]], [j[(1, 0)], j[(1, 1)]]],
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeFit {
    pub a: f64,
    /// `log A` in `u ≈ A (ξ + a) e^{−ηξ}`.
    pub log_amplitude: f64,
    pub rms: f64,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveProfile {
    pub kind: WaveKind,
    pub alpha: f64,
    /// `None` for reduced fronts.
    pub eps: Option<f64>,
    pub xi: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub c: f64,
    pub eta: f64,
    pub edge_fit: Option<EdgeFit>,
    pub wake_bound_ok: bool,
    /// Converged drift `s`: the truncated problem travels at `c + s`.
    pub drift: f64,
    /// Max-norm residual of the steady equations at speed `c`.
    pub steady_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Serialize)]
struct WaveMetadata {
    c: f64,
    eta: f64,
    a: Option<f64>,
    rms: Option<f64>,
    wake_bound_ok: bool,
}

impl WaveProfile {
    pub fn grid_dx(&self) -> f64 {
        self.xi[1] - self.xi[0]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("xi,u,v\n");
        for i in 0..self.xi.len() {
            out.push_str(&format!("{},{},{}\n", self.xi[i], self.u[i], self.v[i]));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        let meta = WaveMetadata {
            c: self.c,
            eta: self.eta,
            a: self.edge_fit.map(|f| f.a),
            rms: self.edge_fit.map(|f| f.rms),
            wake_bound_ok: self.wake_bound_ok,
        };
        let text = serde_json::to_string_pretty(&meta)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Largest pointwise difference in `u` and `v` from another profile on the same grid.
    pub fn distance_to(&self, other: &WaveProfile) -> Result<f64> {
        if self.xi.len() != other.xi.len()
            || (self.xi[0] - other.xi[0]).abs() > 1e-12
            || (self.grid_dx() - other.grid_dx()).abs() > 1e-12
        {
            return Err(Error::InvalidParameter(
                "profiles live on different grids".into(),
            ));
        }
        let mut d = 0.0f64;
        for i in 0..self.xi.len() {
            d = d
                .max((self.u[i] - other.u[i]).abs())
                .max((self.v[i] - other.v[i]).abs());
        }
        Ok(d)
    }

    /// `u > 0` (and `v > 0` for full fronts) at every interior node.
    pub fn is_positive(&self) -> bool {
        let n = self.xi.len();
        (1..n - 1)
            .all(|i| self.u[i] > 0.0 && (self.kind == WaveKind::ReducedKpp || self.v[i] > 0.0))
    }

    /// `u` strictly decreasing wherever it is resolved (between the floor and 1).
    pub fn is_monotone(&self) -> bool {
        let n = self.xi.len();
        (0..n - 1).all(|i| {
            let resolved = self.u[i + 1] > PROFILE_FLOOR && 1.0 - self.u[i] > 1e-12;
            !resolved || self.u[i + 1] < self.u[i]
        })
    }

    pub fn min_sum(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| u + v)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Pseudo-transient continuation with frozen translation.
struct Relaxation<'a> {
    sys: System,
    grid: &'a Grid1D,
    c: f64,
    right: [f64; 2],
    pin: usize,
}

struct Relaxed {
    state: Vec<f64>,
    drift: f64,
    iterations: usize,
}

impl Relaxation<'_> {
    fn n(&self) -> usize {
        self.grid.n_points()
    }

    /// Central first difference, zero at the Neumann node.
    fn d1(&self, x: &[f64], comp: usize) -> Vec<f64> {
        let (m, n, h) = (self.sys.m(), self.n(), self.grid.dx());
        let mut out = vec![0.0; n * m];
        for i in 1..n - 1 {
            out[m * i + comp] = (x[m * (i + 1) + comp] - x[m * (i - 1) + comp]) / (2.0 * h);
        }
        out
    }

    /// Steady residual at speed `c + s`; the Dirichlet node contributes 0.
    fn residual(&self, x: &[f64], s: f64) -> Vec<f64> {
        let (m, n, h) = (self.sys.m(), self.n(), self.grid.dx());
        let speed = self.c + s;
        let inv2 = 1.0 / (h * h);
        let mut r = vec![0.0; n * m];
        for i in 0..n - 1 {
            let (f, _) = self.sys.reaction(&x[m * i..m * i + m]);
            for k in 0..m {
                let at = |j: usize| x[m * j + k];
                let (diff, adv) = if i == 0 {
                    (2.0 * (at(1) - at(0)) * inv2, 0.0)
                } else {
                    (
                        (at(i + 1) - 2.0 * at(i) + at(i - 1)) * inv2,
                        speed * (at(i + 1) - at(i - 1)) / (2.0 * h),
                    )
                };
                r[m * i + k] = diff + adv + f[k];
            }
        }
        r
    }

    /// `I/Δτ − ∂R/∂U` at speed `c + s`.
    fn matrix(&self, x: &[f64], s: f64, dtau: f64) -> Banded<f64> {
        let (m, n, h) = (self.sys.m(), self.n(), self.grid.dx());
        let speed = self.c + s;
        let inv2 = 1.0 / (h * h);
        let mut a = Banded::<f64>::zeros(n * m, m, m);
        for i in 0..n {
            for k in 0..m {
                let row = m * i + k;
                if i == n - 1 {
                    a.set(row, row, 1.0);
                    continue;
                }
                a.add(row, row, 1.0 / dtau + 2.0 * inv2);
                if i == 0 {
                    a.add(row, m + k, -2.0 * inv2);
                } else {
                    let adv = speed / (2.0 * h);
                    a.add(row, m * (i + 1) + k, -(inv2 + adv));
                    a.add(row, m * (i - 1) + k, -(inv2 - adv));
                }
            }
            if i < n - 1 {
                let (_, jac) = self.sys.reaction(&x[m * i..m * i + m]);
                for k in 0..m {
                    for l in 0..m {
                        a.add(m * i + k, m * i + l, -jac[k][l]);
                    }
                }
            }
        }
        a
    }

    fn run(&self, mut x: Vec<f64>) -> Result<Relaxed> {
        let m = self.sys.m();
        let n = self.n();
        for k in 0..m {
            x[m * (n - 1) + k] = self.right[k];
        }
        let pin_row = m * self.pin;
        let mut s = 0.0;
        let mut dtau = 0.05;
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut res_norm = norm(&self.frozen_residual(&x, s));
        for it in 1..=MAX_RELAX_ITER {
            let rhs = self.frozen_residual(&x, s);
            let lu = self.matrix(&x, s, dtau).lu()?;
            let y = lu.solve(&rhs);
            let mut z = self.d1(&x, 0);
            if m == 2 {
                let zv = self.d1(&x, 1);
                for (a, b) in z.iter_mut().zip(zv) {
                    *a += b;
                }
            }
            lu.solve_in_place(&mut z);
            let q = 0.5 - x[pin_row];
            if z[pin_row] == 0.0 {
                return Err(Error::NoConvergence {
                    iterations: it,
                    detail: "phase condition is degenerate".into(),
                });
            }
            let ds = (q - y[pin_row]) / z[pin_row];
            let dx: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a + b * ds).collect();
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let trial_s = s + ds;
            if !trial.iter().all(|t| t.is_finite()) || !trial_s.is_finite() {
                dtau *= 0.25;
                if dtau < 1e-10 {
                    return Err(Error::NoConvergence {
                        iterations: it,
                        detail: "pseudo time step collapsed".into(),
                    });
                }
                continue;
            }
            let rate = norm(&dx) / dtau;
            x = trial;
            s = trial_s;
            if rate < RELAX_TOL {
                return Ok(Relaxed {
                    state: x,
                    drift: s,
                    iterations: it,
                });
            }
            // switched evolution relaxation
            let new_norm = norm(&self.frozen_residual(&x, s));
            let growth = (res_norm / new_norm.max(1e-300)).clamp(0.5, 4.0);
            dtau = (dtau * growth).clamp(1e-3, 1e6);
            res_norm = new_norm;
        }
        Err(Error::NoConvergence {
            iterations: MAX_RELAX_ITER,
            detail: format!("relaxation did not settle (drift {s:.3e})"),
        })
    }

    // the drift multiplies U_ξ; `residual` already includes it through `c + s`
    fn frozen_residual(&self, x: &[f64], s: f64) -> Vec<f64> {
        self.residual(x, s)
    }
}

fn pin_index(grid: &Grid1D) -> Result<usize> {
    if !(grid.origin() < 0.0 && grid.end() > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "comoving grid [{}, {}] must contain 0",
            grid.origin(),
            grid.end()
        )));
    }
    Ok(grid.nearest_index(0.0))
}

/// Logistic-shaped starting guess with `u(0) = 1/2`.
fn sigmoid_guess(grid: &Grid1D, eta: f64) -> Vec<f64> {
    grid.points()
        .into_iter()
        .map(|x| 1.0 / (1.0 + (eta * x).exp()))
        .collect()
}

/// Comoving grid `[-50, 150]` with `dx = 0.05`.
pub fn default_wave_grid() -> Grid1D {
    Grid1D::spanning(-50.0, 150.0, 0.05, crate::pde::RightBoundary::Dirichlet0)
        .expect("static grid is valid")
}

/// Front of a scalar reaction at its linear spreading speed `2√f'(0)`.
pub fn solve_scalar_front(reaction: ScalarReaction, grid: &Grid1D) -> Result<WaveProfile> {
    let rate = reaction.linear_rate();
    if !(rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "f'(0) = {rate} is not positive"
        )));
    }
    let c = 2.0 * rate.sqrt();
    let eta = 0.5 * c;
    let pin = pin_index(grid)?;
    let relax = Relaxation {
        sys: System::Scalar(reaction),
        grid,
        c,
        right: [0.0, 0.0],
        pin,
    };
    let out = relax.run(sigmoid_guess(grid, eta))?;
    check_drift(out.drift)?;
    let steady = relax.residual(&out.state, 0.0);
    let alpha = match reaction {
        ScalarReaction::Reduced { alpha } => alpha,
        ScalarReaction::Logistic => f64::NAN,
    };
    let u = out.state;
    let v: Vec<f64> = u.iter().map(|&x| reaction.v_of(x)).collect();
    let mut profile = WaveProfile {
        kind: WaveKind::ReducedKpp,
        alpha,
        eps: None,
        xi: grid.points(),
        u,
        v,
        c,
        eta,
        edge_fit: None,
        wake_bound_ok: false,
        drift: out.drift,
        steady_residual: steady.iter().fold(0.0, |a, b| a.max(b.abs())),
        iterations: out.iterations,
    };
    finish(&mut profile);
    Ok(profile)
}

/// The δ = 0 reduced front `0 = u'' + c u' + f(u, v_α(u))` with `v = v_α(u)`.
pub fn solve_reduced_front(alpha: f64, grid: &Grid1D) -> Result<WaveProfile> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    solve_scalar_front(ScalarReaction::Reduced { alpha }, grid)
}

/// Full two-component front at the predicted critical speed.
pub fn solve_full_front(p: &ModelParams, kind: WaveKind, grid: &Grid1D) -> Result<WaveProfile> {
    let speeds = predicted_speeds(p);
    let (c, eta, right) = match kind {
        WaveKind::SecondaryCsc => {
            if p.alpha() >= 1.0 {
                return Err(Error::Regime(format!(
                    "secondary CSC fronts need alpha < 1, got {}",
                    p.alpha()
                )));
            }
            (speeds.c_sc, speeds.eta_sc, [0.0, 1.0 - p.alpha()])
        }
        WaveKind::PrimaryCsc => (speeds.c_pc, speeds.eta_pc, [0.0, 0.0]),
        WaveKind::ReducedKpp => {
            return Err(Error::InvalidParameter(
                "use solve_reduced_front for reduced fronts".into(),
            ))
        }
    };
    // lift the reduced front onto the slow manifold as the starting guess
    let reduced = solve_reduced_front(p.alpha(), grid)?;
    let mut guess = Vec::with_capacity(2 * grid.n_points());
    for (u, v) in reduced.u.iter().zip(&reduced.v) {
        guess.push(*u);
        guess.push(*v);
    }
    let relax = Relaxation {
        sys: System::Full(*p),
        grid,
        c,
        right,
        pin: pin_index(grid)?,
    };
    let out = relax.run(guess)?;
    check_drift(out.drift)?;
    let steady = relax.residual(&out.state, 0.0);
    let mut profile = WaveProfile {
        kind,
        alpha: p.alpha(),
        eps: Some(p.eps()),
        xi: grid.points(),
        u: out.state.iter().step_by(2).copied().collect(),
        v: out.state.iter().skip(1).step_by(2).copied().collect(),
        c,
        eta,
        edge_fit: None,
        wake_bound_ok: false,
        drift: out.drift,
        steady_residual: steady.iter().fold(0.0, |a, b| a.max(b.abs())),
        iterations: out.iterations,
    };
    finish(&mut profile);
    Ok(profile)
}

fn check_drift(drift: f64) -> Result<()> {
    if drift.abs() > MAX_DRIFT {
        Err(Error::Drift { drift })
    } else {
        Ok(())
    }
}

fn finish(profile: &mut WaveProfile) {
    profile.edge_fit = default_edge_window(profile)
        .and_then(|w| fit_edge_asymptotics(profile, profile.eta, w).ok());
    profile.wake_bound_ok = match profile.kind {
        WaveKind::PrimaryCsc => false,
        _ if profile.alpha.is_nan() => false,
        _ => check_wake_bound(profile, profile.alpha),
    };
}

/// From the first ξ > 0 where `u < 0.01` (clear of the nonlinear core) to
/// four times that ξ, kept within the first third of the positive half-line
/// where the truncation is not yet felt.
pub fn default_edge_window(profile: &WaveProfile) -> Option<(f64, f64)> {
    let end = *profile.xi.last()?;
    let start = profile
        .xi
        .iter()
        .zip(&profile.u)
        .find(|(x, u)| **x > 0.0 && **u < 0.01)
        .map(|(x, _)| *x)?;
    let hi = (4.0 * start).min(end / 3.0);
    (hi > start).then_some((start, hi))
}

/// Fits `log u + η ξ = log A + log(ξ + a)` on `window`, with `log A`
/// eliminated; returns `a` and the rms misfit in log space.
pub fn fit_edge_asymptotics(
    profile: &WaveProfile,
    eta: f64,
    window: (f64, f64),
) -> Result<EdgeFit> {
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (x, u) in profile.xi.iter().zip(&profile.u) {
        if *x >= lo && *x <= hi {
            if !(*u > 0.0) {
                return Err(Error::Domain {
                    what: "edge fit",
                    detail: format!("u = {u} at xi = {x}"),
                });
            }
            xs.push(*x);
            ys.push(u.ln() + eta * x);
        }
    }
    if xs.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            have: xs.len(),
        });
    }
    let x_min = xs[0];
    // sum of squares with the optimal log A for a given a
    let sse = |a: f64| {
        let r: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (x + a).ln()).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        r.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
    };
    // a + x_min ranges over (0, ∞); scan on a log scale, then refine
    let to_a = |t: f64| t.exp() - x_min;
    let (t_lo, t_hi, steps) = (-8.0f64, 12.0f64, 400);
    let h = (t_hi - t_lo) / steps as f64;
    let best = (0..=steps)
        .map(|k| t_lo + h * k as f64)
        .min_by(|a, b| sse(to_a(*a)).total_cmp(&sse(to_a(*b))))
        .expect("non-empty scan");
    let (mut a, mut b) = ((best - h).max(t_lo), (best + h).min(t_hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c1 = b - g * (b - a);
        let c2 = a + g * (b - a);
        if sse(to_a(c1)) < sse(to_a(c2)) {
            b = c2;
        } else {
            a = c1;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    let a_fit = to_a(0.5 * (a + b));
    let log_amplitude = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (x + a_fit).ln())
        .sum::<f64>()
        / xs.len() as f64;
    Ok(EdgeFit {
        a: a_fit,
        log_amplitude,
        rms: (sse(a_fit) / xs.len() as f64).sqrt(),
        window,
    })
}

/// Whether `min (u + v) > 3 (1 − α) / 4` along the profile.
pub fn check_wake_bound(profile: &WaveProfile, alpha: f64) -> bool {
    profile.min_sum() > 0.75 * (1.0 - alpha)
}

/// Slope of `log |(u, v) − (1, 0)|` against depth `−ξ` into the wake,
/// fitted where the distance lies in `[1e−10, 1e−3]`. Negative when the
/// wake converges exponentially.
pub fn wake_decay_rate(profile: &WaveProfile) -> Result<f64> {
    let mut pts = Vec::new();
    for i in 0..profile.xi.len() {
        if profile.xi[i] >= 0.0 {
            break;
        }
        let d = ((profile.u[i] - 1.0).powi(2) + profile.v[i].powi(2)).sqrt();
        if (1e-10..=1e-3).contains(&d) {
            pts.push((-profile.xi[i], d.ln()));
        }
    }
    if pts.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            have: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("wake points share one xi".into()));
    }
    Ok(sxy / sxx)
}
