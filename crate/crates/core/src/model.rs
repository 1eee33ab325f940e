//! Algebraic content of the rescaled two-species model
//!
//! ```text
//! u_t = u_xx + (1 - u - v) u
//! eps v_t = eps v_xx + (1 - eps)(1 - u - v) u + (1 - u - v) v - alpha v
//! ```
//!
//! `u` is the cancer-stem-cell density and `v` the tumor-cell density.
//! Everything here is a pure function of value types.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<f64>;

/// Step used for every finite-difference derivative of the reduced reaction.
pub const FD_STEP: f64 = 1e-6;

/// TC death rate `alpha` and CSC self-renewal probability `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    alpha: f64,
    eps: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, eps: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(eps.is_finite() && eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps must lie in (0, 1), got {eps}"
            )));
        }
        Ok(Self { alpha, eps })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `alpha = 1 / (1 + eps)`, where the secondary and primary TC speeds coincide.
    pub fn regime_threshold(&self) -> f64 {
        1.0 / (1.0 + self.eps)
    }

    pub fn regime(&self) -> Regime {
        if self.alpha < self.regime_threshold() {
            Regime::Staged
        } else {
            Regime::TcExtinction
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// TCs invade the cancer-free state first, CSCs follow more slowly.
    Staged,
    /// CSCs invade the cancer-free state directly.
    TcExtinction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    CancerFree,
    PureTc,
    PureCsc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    NotPhysical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub kind: EquilibriumKind,
    pub u: f64,
    pub v: f64,
    pub stability: Stability,
}

/// Closed-form invasion speeds and decay rates.
///
/// `c_pt` and `eta_pt` are `None` when `alpha > 1`, where the pure TC state
/// has negative density. At `alpha == 1` they are `Some(0.0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedPrediction {
    pub c_pt: Option<f64>,
    pub c_sc: f64,
    pub c_pc: f64,
    pub eta_pt: Option<f64>,
    pub eta_sc: f64,
    pub eta_pc: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianForm {
    /// Jacobian of the system with the `v` equation divided by `eps`.
    DividedByEps,
    /// Jacobian of `(f, g)` paired with the mass matrix `diag(1, eps)`.
    Weighted,
}

/// A Jacobian together with the diagonal of its mass matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    pub matrix: Mat2,
    pub mass: [f64; 2],
}

/// CSC growth term `u (1 - u - v)`.
pub fn reaction_f(u: f64, v: f64) -> f64 {
    u * (1.0 - u - v)
}

/// TC source term; with `at_delta_zero` the `eps` correction to CSC division is dropped.
pub fn reaction_g(u: f64, v: f64, p: &ModelParams, at_delta_zero: bool) -> f64 {
    let free = 1.0 - u - v;
    let renewal = if at_delta_zero { 1.0 } else { 1.0 - p.eps };
    renewal * free * u + free * v - p.alpha * v
}

/// Partial derivatives `[[f_u, f_v], [g_u, g_v]]` of the undivided reaction.
fn reaction_jacobian(u: f64, v: f64, p: &ModelParams) -> Mat2 {
    let r = 1.0 - p.eps;
    Mat2::new(
        1.0 - 2.0 * u - v,
        -u,
        r * (1.0 - 2.0 * u - v) - v,
        -r * u + (1.0 - u - 2.0 * v) - p.alpha,
    )
}

pub fn jacobian(u: f64, v: f64, p: &ModelParams, form: JacobianForm) -> Jacobian {
    let mut m = reaction_jacobian(u, v, p);
    match form {
        JacobianForm::DividedByEps => {
            m[(1, 0)] /= p.eps;
            m[(1, 1)] /= p.eps;
            Jacobian {
                matrix: m,
                mass: [1.0, 1.0],
            }
        }
        JacobianForm::Weighted => Jacobian {
            matrix: m,
            mass: [1.0, p.eps],
        },
    }
}

/// Real eigenvalues of a 2x2 matrix, or the real parts when they are complex.
fn eigen_real_parts(m: &Mat2) -> [f64; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [0.5 * tr + s, 0.5 * tr - s]
    } else {
        [0.5 * tr, 0.5 * tr]
    }
}

pub fn equilibria(p: &ModelParams) -> Vec<Equilibrium> {
    let classify = |u: f64, v: f64| {
        let j = jacobian(u, v, p, JacobianForm::DividedByEps).matrix;
        if eigen_real_parts(&j).iter().all(|&re| re < 0.0) {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    };
    let tc_v = 1.0 - p.alpha;
    let tc_stability = if p.alpha >= 1.0 {
        Stability::NotPhysical
    } else {
        classify(0.0, tc_v)
    };
    vec![
        Equilibrium {
            kind: EquilibriumKind::CancerFree,
            u: 0.0,
            v: 0.0,
            stability: classify(0.0, 0.0),
        },
        Equilibrium {
            kind: EquilibriumKind::PureTc,
            u: 0.0,
            v: tc_v,
            stability: tc_stability,
        },
        Equilibrium {
            kind: EquilibriumKind::PureCsc,
            u: 1.0,
            v: 0.0,
            stability: classify(1.0, 0.0),
        },
    ]
}

/// Non-negative root `v` of `g(u, v; alpha, 0) = 0`, the slow manifold.
///
/// Uses the `+` root of `v^2 - (1 - 2u - alpha) v - (u - u^2) = 0` for every
/// `alpha`. When the linear coefficient is negative the root is evaluated as
/// `2(u - u^2) / (sqrt(D) - b)` to avoid cancellation.
pub fn slow_manifold_v(u: f64, alpha: f64) -> Result<f64> {
    let disc = (1.0 - alpha).powi(2) + 4.0 * alpha * u;
    if disc.is_nan() || disc < 0.0 {
        return Err(Error::Domain {
            what: "slow manifold",
            detail: format!("u = {u} is below -(1-alpha)^2/(4 alpha) for alpha = {alpha}"),
        });
    }
    let b = 1.0 - 2.0 * u - alpha;
    let root = disc.sqrt();
    if b >= 0.0 {
        Ok(0.5 * (b + root))
    } else {
        Ok(2.0 * (u - u * u) / (root - b))
    }
}

/// Lower edge `-(1-alpha)^2/(4 alpha)` of the normally hyperbolic part of the slow manifold.
pub fn normal_hyperbolicity_bound(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    Ok(-(1.0 - alpha).powi(2) / (4.0 * alpha))
}

/// Half the hyperbolicity bound; reductions stay at or above this value of `u`.
pub fn reduction_lower_bound(alpha: f64) -> Result<f64> {
    Ok(0.5 * normal_hyperbolicity_bound(alpha)?)
}

pub fn predicted_speeds(p: &ModelParams) -> SpeedPrediction {
    let c_pt = (p.alpha <= 1.0).then(|| 2.0 * ((1.0 - p.alpha) / p.eps).sqrt());
    let c_sc = 2.0 * p.alpha.sqrt();
    SpeedPrediction {
        c_pt,
        c_sc,
        c_pc: 2.0,
        eta_pt: c_pt.map(|c| 0.5 * c),
        eta_sc: 0.5 * c_sc,
        eta_pc: 1.0,
        regime: p.regime(),
    }
}

/// Reduced CSC reaction `f(u, v_alpha(u))` on the slow manifold.
pub fn reduced_f(u: f64, alpha: f64) -> Result<f64> {
    Ok(reaction_f(u, slow_manifold_v(u, alpha)?))
}

/// Central-difference derivative of [`reduced_f`], one-sided where the
/// backward point leaves the manifold's domain.
pub fn reduced_f_prime(u: f64, alpha: f64) -> Result<f64> {
    let h = FD_STEP;
    let fwd = reduced_f(u + h, alpha)?;
    match reduced_f(u - h, alpha) {
        Ok(back) => Ok((fwd - back) / (2.0 * h)),
        Err(_) => Ok((fwd - reduced_f(u, alpha)?) / h),
    }
}

/// `g_v` at `delta = 0`, evaluated on the slow manifold.
pub fn manifold_g_v(u: f64, alpha: f64) -> Result<f64> {
    let v = slow_manifold_v(u, alpha)?;
    Ok(1.0 - 2.0 * (u + v) - alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KppReport {
    /// `max_u (f~(u) - f~'(0) u)` over the sample; `<= 0` when the condition holds.
    pub max_violation: f64,
    pub standard_holds: bool,
    /// Whether `f~'(u) <= f~'(0) u` (the inequality with a derivative on the left) holds.
    pub derivative_form_holds: bool,
}

/// Samples the Fisher-KPP condition `f~(u) <= f~'(0) u` on `n` points of `[0, 1]`.
pub fn kpp_condition(alpha: f64, n: usize, tol: f64) -> Result<KppReport> {
    let slope = reduced_f_prime(0.0, alpha)?;
    let mut max_violation = f64::NEG_INFINITY;
    let mut derivative_form_holds = true;
    for i in 0..n {
        let u = i as f64 / (n - 1).max(1) as f64;
        max_violation = max_violation.max(reduced_f(u, alpha)? - slope * u);
        if reduced_f_prime(u, alpha)? > slope * u + tol {
            derivative_form_holds = false;
        }
    }
    Ok(KppReport {
        max_violation,
        standard_holds: max_violation <= tol,
        derivative_form_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(alpha: f64, eps: f64) -> ModelParams {
        ModelParams::new(alpha, eps).unwrap()
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(ModelParams::new(0.0, 0.1).is_err());
        assert!(ModelParams::new(-1.0, 0.1).is_err());
        assert!(ModelParams::new(0.5, 0.0).is_err());
        assert!(ModelParams::new(0.5, 1.0).is_err());
        assert!(ModelParams::new(f64::NAN, 0.1).is_err());
        assert!(ModelParams::new(1.0, 0.1).is_ok());
    }

    #[test]
    fn reaction_terms() {
        assert_eq!(reaction_f(0.0, 0.3), 0.0);
        assert_eq!(reaction_f(1.0, 0.0), 0.0);
        assert_abs_diff_eq!(reaction_f(0.5, 0.25), 0.125, epsilon = 1e-15);

        for alpha in [0.25, 0.75, 1.5] {
            let p = params(alpha, 0.1);
            assert_abs_diff_eq!(
                reaction_g(0.0, 1.0 - alpha, &p, false),
                0.0,
                epsilon = 1e-15
            );
            assert_abs_diff_eq!(reaction_g(1.0, 0.0, &p, false), 0.0, epsilon = 1e-15);
        }
        let p = params(0.75, 0.1);
        assert_abs_diff_eq!(reaction_g(0.5, 0.25, &p, true), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_entries() {
        let (alpha, eps) = (0.75, 0.1);
        let p = params(alpha, eps);
        let j = jacobian(0.0, 0.0, &p, JacobianForm::DividedByEps).matrix;
        assert_abs_diff_eq!(j[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j[(0, 1)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j[(1, 0)], (1.0 - eps) / eps, epsilon = 1e-12);
        assert_abs_diff_eq!(j[(1, 1)], (1.0 - alpha) / eps, epsilon = 1e-12);

        let j = jacobian(0.0, 1.0 - alpha, &p, JacobianForm::DividedByEps).matrix;
        assert_abs_diff_eq!(
            j[(1, 0)],
            ((2.0 - eps) * alpha - 1.0) / eps,
            epsilon = 1e-12
        );
        assert_eq!(j[(0, 1)], 0.0);
        assert_abs_diff_eq!(j[(0, 0)], alpha, epsilon = 1e-15);
        assert_abs_diff_eq!(j[(1, 1)], (alpha - 1.0) / eps, epsilon = 1e-12);

        let w = jacobian(0.0, 1.0 - alpha, &p, JacobianForm::Weighted);
        assert_eq!(w.mass, [1.0, eps]);
        assert_abs_diff_eq!(w.matrix[(1, 0)] / eps, j[(1, 0)], epsilon = 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = params(0.6, 0.2);
        let (u, v) = (0.3, 0.45);
        let h = 1e-6;
        let j = jacobian(u, v, &p, JacobianForm::Weighted).matrix;
        let fu = (reaction_f(u + h, v) - reaction_f(u - h, v)) / (2.0 * h);
        let fv = (reaction_f(u, v + h) - reaction_f(u, v - h)) / (2.0 * h);
        let gu = (reaction_g(u + h, v, &p, false) - reaction_g(u - h, v, &p, false)) / (2.0 * h);
        let gv = (reaction_g(u, v + h, &p, false) - reaction_g(u, v - h, &p, false)) / (2.0 * h);
        assert_abs_diff_eq!(j[(0, 0)], fu, epsilon = 1e-8);
        assert_abs_diff_eq!(j[(0, 1)], fv, epsilon = 1e-8);
        assert_abs_diff_eq!(j[(1, 0)], gu, epsilon = 1e-8);
        assert_abs_diff_eq!(j[(1, 1)], gv, epsilon = 1e-8);
    }

    #[test]
    fn equilibrium_table() {
        let eq = equilibria(&params(0.75, 0.1));
        assert_eq!(eq.len(), 3);
        assert_eq!(eq[0].stability, Stability::Unstable);
        assert_eq!((eq[1].u, eq[1].v), (0.0, 0.25));
        assert_eq!(eq[1].stability, Stability::Unstable);
        assert_eq!((eq[2].u, eq[2].v), (1.0, 0.0));
        assert_eq!(eq[2].stability, Stability::Stable);

        let eq = equilibria(&params(1.25, 0.1));
        assert_eq!(eq[1].kind, EquilibriumKind::PureTc);
        assert_eq!(eq[1].stability, Stability::NotPhysical);
        assert_eq!(eq[2].stability, Stability::Stable);
        assert_eq!(
            equilibria(&params(1.0, 0.1))[1].stability,
            Stability::NotPhysical
        );
    }

    #[test]
    fn slow_manifold_values() {
        assert_abs_diff_eq!(slow_manifold_v(0.0, 0.75).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(slow_manifold_v(0.0, 0.3).unwrap(), 0.7, epsilon = 1e-15);
        for alpha in [0.25, 0.75, 1.25, 2.0] {
            assert_abs_diff_eq!(slow_manifold_v(1.0, alpha).unwrap(), 0.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(slow_manifold_v(0.0, 1.5).unwrap(), 0.0, epsilon = 1e-15);
        let v = slow_manifold_v(0.5, 0.75).unwrap();
        assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
        let p = params(0.75, 0.1);
        assert_abs_diff_eq!(reaction_g(0.5, v, &p, true), 0.0, epsilon = 1e-15);
        assert!(slow_manifold_v(-0.1, 0.75).is_err());
    }

    #[test]
    fn hyperbolicity_bound() {
        assert_eq!(normal_hyperbolicity_bound(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            normal_hyperbolicity_bound(0.75).unwrap(),
            -1.0 / 48.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            normal_hyperbolicity_bound(0.5).unwrap(),
            -0.125,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            reduction_lower_bound(0.5).unwrap(),
            -0.0625,
            epsilon = 1e-15
        );
        assert!(normal_hyperbolicity_bound(0.0).is_err());
    }

    #[test]
    fn speeds_and_regime() {
        let s = predicted_speeds(&params(0.75, 0.1));
        assert_abs_diff_eq!(s.c_pt.unwrap(), 2.0 * 2.5f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(s.c_pt.unwrap(), 3.16228, epsilon = 1e-5);
        assert_abs_diff_eq!(s.c_sc, 3f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(s.eta_sc, 0.75f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(s.eta_pt.unwrap(), 0.5 * s.c_pt.unwrap(), epsilon = 1e-14);
        assert_eq!(s.regime, Regime::Staged);

        let s = predicted_speeds(&params(1.25, 0.1));
        assert_eq!(s.c_pc, 2.0);
        assert_eq!(s.eta_pc, 1.0);
        assert_eq!(s.c_pt, None);
        assert_eq!(s.regime, Regime::TcExtinction);

        assert_eq!(predicted_speeds(&params(1.0, 0.1)).c_pt, Some(0.0));

        for eps in [0.05, 0.1, 0.3] {
            let alpha = 1.0 / (1.0 + eps);
            let s = predicted_speeds(&params(alpha, eps));
            assert_abs_diff_eq!(s.c_sc, s.c_pt.unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn reduced_reaction() {
        for alpha in [0.25, 0.75, 1.25] {
            assert_abs_diff_eq!(reduced_f(0.0, alpha).unwrap(), 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(reduced_f(1.0, alpha).unwrap(), 0.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(reduced_f_prime(0.0, 0.75).unwrap(), 0.75, epsilon = 1e-6);
        assert_abs_diff_eq!(reduced_f_prime(0.0, 1.5).unwrap(), 1.0, epsilon = 1e-6);
        for alpha in [0.1, 0.5, 0.9] {
            assert!(reduced_f_prime(1.0, alpha).unwrap() < 0.0);
        }
    }

    #[test]
    fn kpp_condition_holds_below_one() {
        for alpha in [0.25, 0.5, 0.75] {
            let r = kpp_condition(alpha, 1001, 1e-10).unwrap();
            assert!(r.standard_holds, "alpha = {alpha}: {r:?}");
        }
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn manifold_is_a_root_of_g(u in 0.0f64..1.0, alpha in 0.05f64..2.5) {
            let p = ModelParams::new(alpha, 0.1).unwrap();
            let v = slow_manifold_v(u, alpha).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert!(reaction_g(u, v, &p, true).abs() < 1e-12);
        }

        #[test]
        fn manifold_is_normally_hyperbolic(alpha in 0.05f64..2.5, t in 0.001f64..1.0) {
            let lo = normal_hyperbolicity_bound(alpha).unwrap();
            let u = lo + t * (1.0 - lo);
            let disc = (1.0 - alpha).powi(2) + 4.0 * alpha * u;
            let gv = manifold_g_v(u, alpha).unwrap();
            prop_assert!(gv < 0.0);
            prop_assert!((gv + disc.sqrt()).abs() < 1e-12);
        }

        #[test]
        fn regime_matches_speed_order(alpha in 0.01f64..0.999, eps in 0.01f64..0.9) {
            let p = ModelParams::new(alpha, eps).unwrap();
            let s = predicted_speeds(&p);
            prop_assume!((alpha - p.regime_threshold()).abs() > 1e-9);
            prop_assert_eq!(s.regime == Regime::Staged, s.c_sc < s.c_pt.unwrap());
        }
    }
}
