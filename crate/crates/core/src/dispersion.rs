//! Dispersion relations of the system linearised about a spatially constant
//! state, in a frame moving with speed `c`:
//!
//! `d(λ, ν) = det(D ν² + c ν I + J − λ I)`.
//!
//! Everything here works for an arbitrary 2×2 Jacobian `J` and diagonal
//! diffusion `D`; [`DispersionSystem::about`] builds the two cases used by the
//! model.

use std::fs;
use std::path::Path;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{jacobian, JacobianForm, Mat2, ModelParams};

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
pub const PINCH_STEPS: usize = 200;

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearState {
    /// `(u, v) = (0, 1 − α)`.
    PureTc,
    /// `(u, v) = (0, 0)`.
    CancerFree,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionSystem {
    pub jac: Mat2,
    pub diffusion: [f64; 2],
}

impl DispersionSystem {
    pub fn new(jac: Mat2, diffusion: [f64; 2]) -> Result<Self> {
        if !diffusion.iter().all(|d| *d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter("diffusion must be positive".into()));
        }
        Ok(Self { jac, diffusion })
    }

    /// Linearisation in the `eps`-divided form, where both diffusivities are 1.
    pub fn about(state: LinearState, p: &ModelParams) -> Self {
        let (u, v) = match state {
            LinearState::PureTc => (0.0, 1.0 - p.alpha()),
            LinearState::CancerFree => (0.0, 0.0),
        };
        Self {
            jac: jacobian(u, v, p, JacobianForm::DividedByEps).matrix,
            diffusion: [1.0, 1.0],
        }
    }

    pub fn is_triangular(&self) -> bool {
        self.jac[(0, 1)] == 0.0 || self.jac[(1, 0)] == 0.0
    }

    fn coupling(&self) -> f64 {
        self.jac[(0, 1)] * self.jac[(1, 0)]
    }

    /// The two diagonal factors `D_i ν² + c ν + J_ii − λ` and their ν-derivatives.
    fn factors(&self, lambda: C, nu: C, c: f64) -> [(C, C, f64); 2] {
        let f = |i: usize| {
            let d = self.diffusion[i];
            (
                nu * nu * d + nu * c + self.jac[(i, i)] - lambda,
                nu * (2.0 * d) + c,
                2.0 * d,
            )
        };
        [f(0), f(1)]
    }

    /// Product form `A B − J12 J21`.
    pub fn eval(&self, lambda: C, nu: C, c: f64) -> C {
        let [(a, _, _), (b, _, _)] = self.factors(lambda, nu, c);
        a * b - self.coupling()
    }

    /// Determinant of the full 2×2 symbol, as an independent check on [`eval`](Self::eval).
    pub fn eval_det(&self, lambda: C, nu: C, c: f64) -> C {
        let m = Matrix2::from_fn(|i, j| {
            let mut x = C::new(self.jac[(i, j)], 0.0);
            if i == j {
                x += nu * nu * self.diffusion[i] + nu * c - lambda;
            }
            x
        });
        m.determinant()
    }

    pub fn d_nu(&self, lambda: C, nu: C, c: f64) -> C {
        let [(a, da, _), (b, db, _)] = self.factors(lambda, nu, c);
        da * b + a * db
    }

    pub fn d_nunu(&self, lambda: C, nu: C, c: f64) -> C {
        let [(a, da, dda), (b, db, ddb)] = self.factors(lambda, nu, c);
        b * dda + da * db * 2.0 + a * ddb
    }

    pub fn d_lambda(&self, lambda: C, nu: C, c: f64) -> C {
        let [(a, _, _), (b, _, _)] = self.factors(lambda, nu, c);
        -(a + b)
    }

    fn d_lambda_nu(&self, lambda: C, nu: C, c: f64) -> C {
        let [(_, da, _), (_, db, _)] = self.factors(lambda, nu, c);
        -(da + db)
    }

    /// The four ν-roots of `d(λ, ·)`.
    pub fn nu_roots(&self, lambda: C, c: f64) -> [C; 4] {
        let [d1, d2] = self.diffusion;
        let a0 = C::new(self.jac[(0, 0)], 0.0) - lambda;
        let b0 = C::new(self.jac[(1, 1)], 0.0) - lambda;
        // monic quartic coefficients, highest first after the leading 1
        let lead = d1 * d2;
        let c3 = C::new(c * (d1 + d2), 0.0) / lead;
        let c2 = (b0 * d1 + a0 * d2 + c * c) / lead;
        let c1 = (a0 + b0) * c / lead;
        let c0 = (a0 * b0 - self.coupling()) / lead;
        let mut roots = aberth([c0, c1, c2, c3]);
        // polish against the quartic itself
        for r in roots.iter_mut() {
            for _ in 0..3 {
                let f = self.eval(lambda, *r, c);
                let df = self.d_nu(lambda, *r, c);
                if df.norm() == 0.0 {
                    break;
                }
                let next = *r - f / df;
                if next.is_finite() && self.eval(lambda, next, c).norm() < f.norm() {
                    *r = next;
                } else {
                    break;
                }
            }
        }
        roots
    }

    /// λ-roots of `d(·, ν) = 0`: eigenvalues of `D ν² + c ν + J`.
    ///
    /// For triangular `J` the diagonal entries are returned exactly, in order.
    pub fn lambda_roots(&self, nu: C, c: f64) -> [C; 2] {
        let diag = |i: usize| nu * nu * self.diffusion[i] + nu * c + self.jac[(i, i)];
        let (p, q) = (diag(0), diag(1));
        if self.is_triangular() {
            return [p, q];
        }
        let half = (p + q) * 0.5;
        let disc = ((p - q) * 0.5).powi(2) + self.coupling();
        let s = disc.sqrt();
        let (l1, l2) = (half + s, half - s);
        if l1.re >= l2.re {
            [l1, l2]
        } else {
            [l2, l1]
        }
    }
}

/// Simultaneous (Aberth–Ehrlich) iteration for the roots of the monic
/// polynomial `z⁴ + c3 z³ + c2 z² + c1 z + c0`, coefficients lowest first.
fn aberth(coeffs: [C; 4]) -> [C; 4] {
    let poly = |z: C| (((z + coeffs[3]) * z + coeffs[2]) * z + coeffs[1]) * z + coeffs[0];
    let dpoly = |z: C| ((z * 4.0 + coeffs[3] * 3.0) * z + coeffs[2] * 2.0) * z + coeffs[1];
    // Cauchy bound on the root moduli
    let radius = 1.0 + coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let centre = -coeffs[3] / 4.0;
    let r0 = radius.min(1.0 + (coeffs[0].norm()).powf(0.25));
    let mut z: [C; 4] = std::array::from_fn(|k| {
        centre + C::from_polar(r0, 0.4 + std::f64::consts::FRAC_PI_2 * k as f64)
    });
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for k in 0..4 {
            let f = poly(z[k]);
            if f.norm() == 0.0 {
                continue;
            }
            let ratio = f / dpoly(z[k]);
            let repulsion: C = (0..4)
                .filter(|&j| j != k)
                .map(|j| C::new(1.0, 0.0) / (z[k] - z[j]))
                .sum();
            let w = ratio / (C::new(1.0, 0.0) - ratio * repulsion);
            if w.is_finite() {
                z[k] -= w;
                moved = moved.max(w.norm() / (1.0 + z[k].norm()));
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionRoot {
    pub lambda: C,
    pub nu: C,
    pub multiplicity_in_nu: usize,
    pub pinched: bool,
    /// `(∂_λ d, ½ ∂_νν d)` at the root.
    pub expansion: (C, C),
}

pub fn eval_dispersion(state: LinearState, lambda: C, nu: C, c: f64, p: &ModelParams) -> C {
    DispersionSystem::about(state, p).eval(lambda, nu, c)
}

/// Newton's method on `(d, ∂_ν d) = 0` in the unknowns `(λ, ν)`.
pub fn find_double_root_of(sys: &DispersionSystem, c: f64, seed: (C, C)) -> Result<DispersionRoot> {
    let (mut lambda, mut nu) = seed;
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITER {
        let f1 = sys.eval(lambda, nu, c);
        let f2 = sys.d_nu(lambda, nu, c);
        let (a, b) = (sys.d_lambda(lambda, nu, c), f2);
        let (cc, dd) = (sys.d_lambda_nu(lambda, nu, c), sys.d_nunu(lambda, nu, c));
        let det = a * dd - b * cc;
        if det.norm() == 0.0 || !det.is_finite() {
            return Err(Error::NoConvergence {
                iterations: NEWTON_MAX_ITER,
                detail: format!("singular Newton matrix at λ = {lambda}, ν = {nu}"),
            });
        }
        let dl = (dd * f1 - b * f2) / det;
        let dn = (a * f2 - cc * f1) / det;
        lambda -= dl;
        nu -= dn;
        let step = dl.norm().max(dn.norm());
        if step <= NEWTON_TOL * (1.0 + lambda.norm().max(nu.norm())) {
            converged = true;
            break;
        }
    }
    let res = sys.eval(lambda, nu, c).norm();
    let dres = sys.d_nu(lambda, nu, c).norm();
    if !converged || res > 1e-10 || dres > 1e-8 {
        return Err(Error::NoConvergence {
            iterations: NEWTON_MAX_ITER,
            detail: format!("|d| = {res:.2e}, |d_nu| = {dres:.2e} at λ = {lambda}, ν = {nu}"),
        });
    }
    let mut multiplicity = 2;
    if sys.d_nunu(lambda, nu, c).norm() < 1e-8 {
        multiplicity = 3;
    }
    let mut root = DispersionRoot {
        lambda,
        nu,
        multiplicity_in_nu: multiplicity,
        pinched: false,
        expansion: (sys.d_lambda(lambda, nu, c), sys.d_nunu(lambda, nu, c) * 0.5),
    };
    root.pinched = pinching_test_of(sys, &root, c)?;
    Ok(root)
}

pub fn find_double_root(
    state: LinearState,
    c: f64,
    p: &ModelParams,
    seed: (C, C),
) -> Result<DispersionRoot> {
    find_double_root_of(&DispersionSystem::about(state, p), c, seed)
}

/// Follows the two ν-roots meeting at `root` along `λ = root.λ + s`,
/// `s ∈ (0, S]`, and reports whether they end up on opposite sides of `Re ν`.
pub fn pinching_test_of(sys: &DispersionSystem, root: &DispersionRoot, c: f64) -> Result<bool> {
    let s_max = 10.0 * root.lambda.norm().max(1.0);
    let ds = s_max / PINCH_STEPS as f64;
    let first = sys.nu_roots(root.lambda + ds, c);
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&i, &j| {
        (first[i] - root.nu)
            .norm()
            .total_cmp(&(first[j] - root.nu).norm())
    });
    let mut pair = [first[idx[0]], first[idx[1]]];
    // nearest-neighbour continuation; a step is bisected when the match is ambiguous
    let mut s = ds;
    let mut h = ds;
    while s < s_max * (1.0 - 1e-12) {
        let target = (s + h).min(s_max);
        let roots = sys.nu_roots(root.lambda + target, c);
        match match_pair(&pair, &roots) {
            Some(next) => {
                pair = next;
                s = target;
                h = (2.0 * h).min(ds);
            }
            None if h > ds * 1e-6 => h *= 0.5,
            None => {
                // once the pair sits on opposite sides the separation is
                // monotone, so a later collision with a third root does not
                // change the verdict
                let (a, b) = (pair[0].re - root.nu.re, pair[1].re - root.nu.re);
                if a * b < 0.0 && a.abs().min(b.abs()) > 1e-6 {
                    return Ok(true);
                }
                return Err(Error::RootTracking(format!(
                    "branches collide at s = {target:.4} (λ = {})",
                    root.lambda
                )));
            }
        }
    }
    let a = pair[0].re - root.nu.re;
    let b = pair[1].re - root.nu.re;
    Ok(a * b < 0.0)
}

/// Assigns each tracked root its nearest successor; `None` if the assignment
/// is not unique or a successor is closer to another root than to its parent.
fn match_pair(pair: &[C; 2], roots: &[C; 4]) -> Option<[C; 2]> {
    let mut next = [C::new(0.0, 0.0); 2];
    let mut used = [usize::MAX; 2];
    for (m, prev) in pair.iter().enumerate() {
        let mut d: Vec<(usize, f64)> = roots
            .iter()
            .map(|r| (r - prev).norm())
            .enumerate()
            .collect();
        d.sort_by(|a, b| a.1.total_cmp(&b.1));
        // demand a clear winner
        if d[1].1 < 2.0 * d[0].1 {
            return None;
        }
        used[m] = d[0].0;
        next[m] = roots[d[0].0];
    }
    (used[0] != used[1]).then_some(next)
}

pub fn pinching_test(
    state: LinearState,
    root: &DispersionRoot,
    c: f64,
    p: &ModelParams,
) -> Result<bool> {
    pinching_test_of(&DispersionSystem::about(state, p), root, c)
}

/// Seeds at the vertices of the diagonal factors: `ν = −c/(2D_i)`, `λ = J_ii − c²/(4D_i)`.
fn vertex_seeds(sys: &DispersionSystem, c: f64) -> [(C, C); 2] {
    let seed = |i: usize| {
        let d = sys.diffusion[i];
        (
            C::new(sys.jac[(i, i)] - c * c / (4.0 * d), 0.0),
            C::new(-c / (2.0 * d), 0.0),
        )
    };
    [seed(0), seed(1)]
}

/// Largest `Re λ` over pinched double roots reached from the vertex seeds.
fn leading_pinched(sys: &DispersionSystem, c: f64) -> Result<DispersionRoot> {
    let mut best: Option<DispersionRoot> = None;
    let mut last_err = None;
    for seed in vertex_seeds(sys, c) {
        // a seed that fails to converge or track does not veto the others
        let root = match find_double_root_of(sys, c, seed) {
            Ok(r) => r,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        if root.pinched && best.is_none_or(|b| root.lambda.re > b.lambda.re) {
            best = Some(root);
        }
    }
    best.ok_or_else(|| {
        Error::Bracket(match last_err {
            Some(e) => format!("no pinched double root at c = {c}: {e}"),
            None => format!("no pinched double root at c = {c}"),
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadingSpeed {
    pub c_star: f64,
    pub nu_star: f64,
    pub eta: f64,
}

/// Bisection on `c` for the speed at which the leading pinched double root
/// has `Re λ = 0`.
pub fn linear_spreading_speed_of(sys: &DispersionSystem) -> Result<SpreadingSpeed> {
    let h = |c: f64| leading_pinched(sys, c).map(|r| r.lambda.re);
    let mut lo = 0.0;
    if h(lo)? <= 0.0 {
        return Err(Error::Bracket(
            "the state is linearly stable at c = 0".into(),
        ));
    }
    let mut hi = 1.0;
    let mut tries = 0;
    while h(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::Bracket(
                "no upper bracket for the spreading speed".into(),
            ));
        }
    }
    while hi - lo > 1e-13 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if h(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    let root = leading_pinched(sys, c)?;
    Ok(SpreadingSpeed {
        c_star: c,
        nu_star: root.nu.re,
        eta: -root.nu.re,
    })
}

pub fn linear_spreading_speed(state: LinearState, p: &ModelParams) -> Result<SpreadingSpeed> {
    linear_spreading_speed_of(&DispersionSystem::about(state, p))
}

/// Spreading speed `2√(D_i J_ii)` of each diagonal factor taken alone, or
/// `None` when that factor is stable.
pub fn factor_speeds(state: LinearState, p: &ModelParams) -> [Option<f64>; 2] {
    let sys = DispersionSystem::about(state, p);
    let speed = |i: usize| {
        let j = sys.jac[(i, i)];
        (j > 0.0).then(|| 2.0 * (sys.diffusion[i] * j).sqrt())
    };
    [speed(0), speed(1)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCurve {
    pub eta: f64,
    pub c: f64,
    pub k_samples: Vec<f64>,
    pub lambda_branches: [Vec<C>; 2],
    /// Largest real part over both branches and its location.
    pub max_re: f64,
    pub argmax_k: f64,
    /// No sampled λ has positive real part (to 1e−12).
    pub no_unstable: bool,
    /// The imaginary axis is only reached at k = 0.
    pub touches_only_at_origin: bool,
}

impl SpectrumCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("k,re_lambda1,im_lambda1,re_lambda2,im_lambda2\n");
        for (i, k) in self.k_samples.iter().enumerate() {
            let (a, b) = (self.lambda_branches[0][i], self.lambda_branches[1][i]);
            out.push_str(&format!("{k},{},{},{},{}\n", a.re, a.im, b.re, b.im));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

const CURVE_TOL: f64 = 1e-12;

pub fn essential_spectrum_curve_of(
    sys: &DispersionSystem,
    eta: f64,
    c: f64,
    k_max: f64,
    n_k: usize,
) -> Result<SpectrumCurve> {
    if n_k < 2 {
        return Err(Error::InvalidParameter(format!("need n_k >= 2, got {n_k}")));
    }
    let ks: Vec<f64> = (0..n_k)
        .map(|i| k_max * i as f64 / (n_k - 1) as f64)
        .collect();
    let mut branches = [Vec::with_capacity(n_k), Vec::with_capacity(n_k)];
    let mut max_re = f64::NEG_INFINITY;
    let mut argmax_k = 0.0;
    let mut touches_only_at_origin = true;
    for &k in &ks {
        let roots = sys.lambda_roots(C::new(-eta, k), c);
        for (b, l) in roots.iter().enumerate() {
            branches[b].push(*l);
            if l.re > max_re {
                max_re = l.re;
                argmax_k = k;
            }
            if l.re.abs() <= CURVE_TOL && k != 0.0 {
                touches_only_at_origin = false;
            }
        }
    }
    Ok(SpectrumCurve {
        eta,
        c,
        k_samples: ks,
        lambda_branches: branches,
        max_re,
        argmax_k,
        no_unstable: max_re <= CURVE_TOL,
        touches_only_at_origin,
    })
}

pub fn essential_spectrum_curve(
    state: LinearState,
    eta: f64,
    c: f64,
    p: &ModelParams,
    k_max: f64,
    n_k: usize,
) -> Result<SpectrumCurve> {
    essential_spectrum_curve_of(&DispersionSystem::about(state, p), eta, c, k_max, n_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(alpha: f64, eps: f64) -> ModelParams {
        ModelParams::new(alpha, eps).unwrap()
    }

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn dispersion_values() {
        let q = p(0.75, 0.1);
        let a = 0.75f64;
        let d = eval_dispersion(
            LinearState::PureTc,
            c(0.0, 0.0),
            c(-a.sqrt(), 0.0),
            2.0 * a.sqrt(),
            &q,
        );
        assert!(d.norm() < 1e-14);
        let d = eval_dispersion(LinearState::CancerFree, c(0.0, 0.0), c(-1.0, 0.0), 2.0, &q);
        assert!(d.norm() < 1e-14);
        let d = eval_dispersion(LinearState::PureTc, c(1.0, 0.0), c(0.0, 0.0), 0.0, &q);
        assert!((d - c(0.875, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn pure_tc_double_root() {
        for (alpha, eps) in [(0.75, 0.1), (0.3, 0.05)] {
            let q = p(alpha, eps);
            let cs = 2.0 * alpha.sqrt();
            let r =
                find_double_root(LinearState::PureTc, cs, &q, (c(0.1, 0.0), c(-0.5, 0.1))).unwrap();
            assert!(r.lambda.norm() < 1e-12, "{}", r.lambda);
            assert!((r.nu - c(-alpha.sqrt(), 0.0)).norm() < 1e-10);
            assert!(r.expansion.0.re > 0.0 && r.expansion.1.re < 0.0);
            assert!(r.pinched);
            assert_eq!(r.multiplicity_in_nu, 2);
        }
    }

    #[test]
    fn cancer_free_double_root() {
        let q = p(1.25, 0.1);
        let r = find_double_root(
            LinearState::CancerFree,
            2.0,
            &q,
            (c(0.2, 0.0), c(-0.8, 0.0)),
        )
        .unwrap();
        assert!(r.lambda.norm() < 1e-12);
        assert!((r.nu + 1.0).norm() < 1e-10);
        assert!(r.pinched);
    }

    #[test]
    fn scalar_vertex() {
        // ν² + cν + α − λ alone, the second factor made very stable
        let alpha = 0.6;
        let sys = DispersionSystem::new(Mat2::new(alpha, 0.0, 0.0, -50.0), [1.0, 1.0]).unwrap();
        let cc = 1.3;
        let r = find_double_root_of(&sys, cc, (c(0.0, 0.0), c(-0.5, 0.0))).unwrap();
        assert!((r.nu.re + cc / 2.0).abs() < 1e-12);
        assert!((r.lambda.re - (alpha - cc * cc / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn scalar_toy_pinches() {
        // d = ν² − λ up to a stable spectator factor
        let sys = DispersionSystem::new(Mat2::new(0.0, 0.0, 0.0, -100.0), [1.0, 1.0]).unwrap();
        let root = DispersionRoot {
            lambda: c(0.0, 0.0),
            nu: c(0.0, 0.0),
            multiplicity_in_nu: 2,
            pinched: false,
            expansion: (c(0.0, 0.0), c(0.0, 0.0)),
        };
        assert!(pinching_test_of(&sys, &root, 0.0).unwrap());
    }

    #[test]
    fn stable_factor_root_is_reported() {
        let (alpha, eps) = (0.75, 0.1);
        let q = p(alpha, eps);
        let cs = 2.0 * alpha.sqrt();
        let lam = (alpha - 1.0) / eps - cs * cs / 4.0;
        let r = find_double_root(
            LinearState::PureTc,
            cs,
            &q,
            (c(lam + 0.1, 0.0), c(-0.9, 0.0)),
        )
        .unwrap();
        assert!((r.lambda.re - lam).abs() < 1e-10);
        assert!(r.lambda.re < 0.0);
        assert!(r.pinched);
    }

    #[test]
    fn spreading_speeds() {
        let q = p(0.75, 0.1);
        let s = linear_spreading_speed(LinearState::PureTc, &q).unwrap();
        assert!((s.c_star - 3f64.sqrt()).abs() < 1e-8);
        assert!((s.eta - 0.75f64.sqrt()).abs() < 1e-8);

        for alpha in [0.05, 0.2, 0.5, 0.9, 0.99] {
            let s = linear_spreading_speed(LinearState::PureTc, &p(alpha, 0.2)).unwrap();
            assert!((s.c_star - 2.0 * f64::sqrt(alpha)).abs() < 1e-8);
        }

        let q = p(1.25, 0.1);
        let s = linear_spreading_speed(LinearState::CancerFree, &q).unwrap();
        assert!((s.c_star - 2.0).abs() < 1e-8);
        assert!((s.eta - 1.0).abs() < 1e-8);

        // staged regime: the v-factor is faster than the u-factor
        let q = p(0.75, 0.1);
        let [fu, fv] = factor_speeds(LinearState::CancerFree, &q);
        assert_eq!(fu, Some(2.0));
        assert!((fv.unwrap() - 2.0 * 2.5f64.sqrt()).abs() < 1e-12);
        let s = linear_spreading_speed(LinearState::CancerFree, &q).unwrap();
        assert!((s.c_star - fv.unwrap()).abs() < 1e-8);
    }

    #[test]
    fn curves_at_the_spreading_speed() {
        let alpha = 0.75f64;
        let eps = 0.1;
        let q = p(alpha, eps);
        let curve = essential_spectrum_curve(
            LinearState::PureTc,
            alpha.sqrt(),
            2.0 * alpha.sqrt(),
            &q,
            5.0,
            101,
        )
        .unwrap();
        for (i, k) in curve.k_samples.iter().enumerate() {
            let l1 = curve.lambda_branches[0][i];
            assert!((l1 - c(-k * k, 0.0)).norm() < 1e-12);
            let l2 = curve.lambda_branches[1][i];
            assert!((l2.re - (-k * k - alpha + (alpha - 1.0) / eps)).abs() < 1e-12);
        }
        assert!(curve.lambda_branches[0][0].norm() < 1e-15);
        assert!(curve.no_unstable);
        assert!(curve.touches_only_at_origin);
        assert_eq!(curve.argmax_k, 0.0);
        assert!(curve.max_re.abs() < 1e-12);
        assert!(essential_spectrum_curve(LinearState::PureTc, 0.0, 0.0, &q, 1.0, 1).is_err());
    }

    #[test]
    fn coupled_system_roots() {
        // a genuinely coupled Jacobian exercises the non-factorised paths
        let sys = DispersionSystem::new(Mat2::new(0.5, 0.1, -0.05, -1.0), [1.0, 1.5]).unwrap();
        let s = linear_spreading_speed_of(&sys).unwrap();
        let r = leading_pinched(&sys, s.c_star).unwrap();
        assert!(r.lambda.re.abs() < 1e-9);
        for nu in [c(0.3, -0.2), c(-1.0, 2.0)] {
            for l in sys.lambda_roots(nu, 0.7) {
                assert!(sys.eval(l, nu, 0.7).norm() < 1e-12);
            }
        }
        for r in sys.nu_roots(c(0.2, 0.1), 0.4) {
            assert!(sys.eval(c(0.2, 0.1), r, 0.4).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn product_matches_determinant(
            alpha in 0.01f64..2.0, eps in 0.01f64..1.0,
            lr in -5.0f64..5.0, li in -5.0f64..5.0, nr in -3.0f64..3.0, ni in -3.0f64..3.0,
            cc in 0.0f64..4.0, cf in proptest::bool::ANY,
        ) {
            let state = if cf { LinearState::CancerFree } else { LinearState::PureTc };
            let sys = DispersionSystem::about(state, &p(alpha, eps));
            let (l, n) = (c(lr, li), c(nr, ni));
            let a = sys.eval(l, n, cc);
            let b = sys.eval_det(l, n, cc);
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }

        #[test]
        fn pure_tc_expansion_signs(alpha in 0.02f64..0.98, eps in 0.005f64..0.3) {
            let q = p(alpha, eps);
            let cs = 2.0 * alpha.sqrt();
            let r = find_double_root(LinearState::PureTc, cs, &q, (c(0.05, 0.0), c(-alpha.sqrt() * 0.9, 0.0))).unwrap();
            prop_assert!(r.lambda.norm() < 1e-10);
            prop_assert!(r.pinched);
            prop_assert!(r.expansion.0.re > 0.0);
            prop_assert!(r.expansion.1.re < 0.0);
        }
    }
}
