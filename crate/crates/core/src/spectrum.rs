//! Spectra of the linearisation about a front, in exponentially weighted
//! coordinates.
//!
//! The operator is discretised by second-order finite differences in the
//! undivided form `B − λK`, `K = diag(1, ε)`, on interior nodes of a
//! truncated ξ-interval. Unknowns are interleaved per node. The weight
//! `ω(ξ) = exp(η s(ξ))`, with `s` a smooth ramp from 0 (ξ ≤ −1) to ξ
//! (ξ ≥ 1), enters as the diagonal similarity `W B W⁻¹`.

use std::fs;
use std::path::Path;

use nalgebra::linalg::Schur;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Banded;
use crate::model::{jacobian, JacobianForm, Mat2, ModelParams};
use crate::wave::{ScalarReaction, WaveKind, WaveProfile};

type C = Complex64;

pub const DEFAULT_DIM_CAP: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Zero boundary values at both ends; used for fronts.
    Dirichlet,
    /// Periodic; only meaningful for constant coefficients.
    Periodic,
}

/// Uniform ξ-grid for the eigenvalue problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub xi_min: f64,
    pub xi_max: f64,
    pub dx: f64,
}

impl SpectralGrid {
    pub fn new(xi_min: f64, xi_max: f64, dx: f64) -> Result<Self> {
        if !(xi_max > xi_min) || !(dx > 0.0) || (xi_max - xi_min) / dx < 4.0 {
            return Err(Error::InvalidParameter(format!(
                "bad spectral grid [{xi_min}, {xi_max}] with dx = {dx}"
            )));
        }
        Ok(Self { xi_min, xi_max, dx })
    }

    pub fn length(&self) -> f64 {
        self.xi_max - self.xi_min
    }

    /// Cells; Dirichlet problems use the `cells − 1` interior nodes,
    /// periodic ones `cells` nodes.
    pub fn cells(&self) -> usize {
        (self.length() / self.dx).round() as usize
    }

    pub fn nodes(&self, truncation: Truncation) -> Vec<f64> {
        let h = self.length() / self.cells() as f64;
        match truncation {
            Truncation::Dirichlet => (1..self.cells())
                .map(|i| self.xi_min + h * i as f64)
                .collect(),
            Truncation::Periodic => (0..self.cells())
                .map(|i| self.xi_min + h * i as f64)
                .collect(),
        }
    }

    pub fn spacing(&self) -> f64 {
        self.length() / self.cells() as f64
    }
}

/// Smooth ramp: 0 for ξ ≤ −1, ξ for ξ ≥ 1, a quintic blend in between.
pub fn weight_ramp(xi: f64) -> f64 {
    if xi <= -1.0 {
        0.0
    } else if xi >= 1.0 {
        xi
    } else {
        let t = 0.5 * (xi + 1.0);
        let h = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
        h * xi
    }
}

/// The generalised pair `(B, K)` together with what is needed to predict
/// its essential spectrum.
#[derive(Debug, Clone)]
pub struct LinearizationPair {
    pub b: DMatrix<f64>,
    pub k: Vec<f64>,
    pub components: usize,
    pub dx: f64,
    pub l_xi: f64,
    pub eta: f64,
    pub truncation: Truncation,
    /// Coefficients of the scalar part `∂² + a1 ∂ + a0` of the divided operator.
    pub a1: f64,
    pub a0: f64,
    /// Eigenvalues of the divided reaction Jacobians at the two end states.
    pub end_rates: Vec<C>,
}

impl LinearizationPair {
    pub fn dim(&self) -> usize {
        self.b.nrows()
    }
}

/// Pointwise Jacobian provider for the linearisation.
trait Coefficients {
    fn components(&self) -> usize;
    /// Undivided Jacobian at ξ, with the mass diagonal.
    fn jac(&self, xi: f64) -> (Mat2, [f64; 2]);
}

struct ProfileCoefficients<'a> {
    profile: &'a WaveProfile,
    params: Option<ModelParams>,
}

impl ProfileCoefficients<'_> {
    fn sample(&self, xi: f64) -> (f64, f64) {
        let p = self.profile;
        let x0 = p.xi[0];
        let h = p.grid_dx();
        let n = p.xi.len();
        let t = ((xi - x0) / h).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        let w = t - i as f64;
        (
            (1.0 - w) * p.u[i] + w * p.u[i + 1],
            (1.0 - w) * p.v[i] + w * p.v[i + 1],
        )
    }
}

impl Coefficients for ProfileCoefficients<'_> {
    fn components(&self) -> usize {
        if self.params.is_some() {
            2
        } else {
            1
        }
    }

    fn jac(&self, xi: f64) -> (Mat2, [f64; 2]) {
        let (u, v) = self.sample(xi);
        match &self.params {
            Some(p) => {
                let j = jacobian(u, v, p, JacobianForm::Weighted);
                (j.matrix, j.mass)
            }
            None => {
                let df = scalar_rate(self.profile.alpha, u);
                (Mat2::new(df, 0.0, 0.0, 0.0), [1.0, 1.0])
            }
        }
    }
}

fn scalar_rate(alpha: f64, u: f64) -> f64 {
    let r = if alpha.is_nan() {
        ScalarReaction::Logistic
    } else {
        ScalarReaction::Reduced { alpha }
    };
    r.eval(u).1
}

struct ConstantCoefficients {
    jac: Mat2,
    mass: [f64; 2],
    components: usize,
}

impl Coefficients for ConstantCoefficients {
    fn components(&self) -> usize {
        self.components
    }

    fn jac(&self, _xi: f64) -> (Mat2, [f64; 2]) {
        (self.jac, self.mass)
    }
}

fn divided_rates(jac: &Mat2, mass: [f64; 2], m: usize) -> Vec<C> {
    if m == 1 {
        return vec![C::new(jac[(0, 0)], 0.0)];
    }
    let d = Mat2::new(
        jac[(0, 0)] / mass[0],
        jac[(0, 1)] / mass[0],
        jac[(1, 0)] / mass[1],
        jac[(1, 1)] / mass[1],
    );
    let half = C::new(0.5 * d.trace(), 0.0);
    let disc = (C::new(0.25 * d.trace() * d.trace() - d.determinant(), 0.0)).sqrt();
    vec![half + disc, half - disc]
}

/// Assembles `B` and `K` for `mass_i (∂² + a1 ∂ + a0) + J(ξ)`.
fn assemble(
    coeffs: &dyn Coefficients,
    grid: &SpectralGrid,
    truncation: Truncation,
    a1: f64,
    a0: f64,
) -> (DMatrix<f64>, Vec<f64>) {
    let m = coeffs.components();
    let nodes = grid.nodes(truncation);
    let n = nodes.len();
    let h = grid.spacing();
    let dim = m * n;
    let mut b = DMatrix::<f64>::zeros(dim, dim);
    let mut k = vec![1.0; dim];
    let (lo, mid, hi) = (
        1.0 / (h * h) - a1 / (2.0 * h),
        -2.0 / (h * h) + a0,
        1.0 / (h * h) + a1 / (2.0 * h),
    );
    for (i, &xi) in nodes.iter().enumerate() {
        let (jac, mass) = coeffs.jac(xi);
        for c in 0..m {
            let row = m * i + c;
            k[row] = mass[c];
            b[(row, row)] += mass[c] * mid;
            let left = match (i, truncation) {
                (0, Truncation::Dirichlet) => None,
                (0, Truncation::Periodic) => Some(n - 1),
                _ => Some(i - 1),
            };
            let right = match truncation {
                Truncation::Dirichlet if i + 1 == n => None,
                Truncation::Periodic if i + 1 == n => Some(0),
                _ => Some(i + 1),
            };
            if let Some(l) = left {
                b[(row, m * l + c)] += mass[c] * lo;
            }
            if let Some(r) = right {
                b[(row, m * r + c)] += mass[c] * hi;
            }
            for d in 0..m {
                b[(row, m * i + d)] += jac[(c, d)];
            }
        }
    }
    (b, k)
}

/// Applies `W B W⁻¹` with `ω = exp(η s(ξ))` at the nodes.
fn conjugate(b: &mut DMatrix<f64>, nodes: &[f64], m: usize, eta: f64) {
    if eta == 0.0 {
        return;
    }
    let s: Vec<f64> = nodes.iter().map(|&x| eta * weight_ramp(x)).collect();
    let dim = b.nrows();
    for i in 0..dim {
        for j in 0..dim {
            let v = b[(i, j)];
            if v != 0.0 {
                b[(i, j)] = v * (s[i / m] - s[j / m]).exp();
            }
        }
    }
}

/// Linearisation about a converged front on `grid`, weighted with the
/// front's own rate η and truncated with Dirichlet conditions.
pub fn build_weighted_linearization(
    profile: &WaveProfile,
    p: Option<&ModelParams>,
    grid: &SpectralGrid,
) -> Result<LinearizationPair> {
    let (lo, hi) = (
        profile.xi[0],
        *profile.xi.last().expect("non-empty profile"),
    );
    if grid.xi_min < lo || grid.xi_max > hi {
        return Err(Error::InvalidParameter(format!(
            "spectral grid [{}, {}] leaves the profile's range [{lo}, {hi}]",
            grid.xi_min, grid.xi_max
        )));
    }
    let params = match (profile.kind, p) {
        (WaveKind::ReducedKpp, _) => None,
        (_, Some(p)) => {
            if (p.alpha() - profile.alpha).abs() > 1e-12 || Some(p.eps()) != profile.eps {
                return Err(Error::InvalidParameter(
                    "model parameters do not match the profile".into(),
                ));
            }
            Some(*p)
        }
        (_, None) => {
            return Err(Error::InvalidParameter(
                "full fronts need model parameters".into(),
            ))
        }
    };
    let coeffs = ProfileCoefficients { profile, params };
    let m = coeffs.components();
    let (mut b, k) = assemble(&coeffs, grid, Truncation::Dirichlet, profile.c, 0.0);
    conjugate(&mut b, &grid.nodes(Truncation::Dirichlet), m, profile.eta);
    let mut end_rates = Vec::new();
    for x in [lo, hi] {
        let (jac, mass) = coeffs.jac(x);
        end_rates.extend(divided_rates(&jac, mass, m));
    }
    Ok(LinearizationPair {
        b,
        k,
        components: m,
        dx: grid.spacing(),
        l_xi: grid.length(),
        eta: profile.eta,
        truncation: Truncation::Dirichlet,
        a1: profile.c,
        a0: 0.0,
        end_rates,
    })
}

/// Linearisation about a spatially constant state `(u, v)` in a frame of
/// speed `c`, conjugated by `e^{ηξ}`: derivatives become `∂ − η`.
pub fn build_constant_linearization(
    u: f64,
    v: f64,
    p: &ModelParams,
    c: f64,
    eta: f64,
    grid: &SpectralGrid,
    truncation: Truncation,
) -> Result<LinearizationPair> {
    let j = jacobian(u, v, p, JacobianForm::Weighted);
    let coeffs = ConstantCoefficients {
        jac: j.matrix,
        mass: j.mass,
        components: 2,
    };
    // (∂ − η)² + c (∂ − η) = ∂² + (c − 2η) ∂ + η² − c η
    let (a1, a0) = (c - 2.0 * eta, eta * eta - c * eta);
    let (b, k) = assemble(&coeffs, grid, truncation, a1, a0);
    Ok(LinearizationPair {
        b,
        k,
        components: 2,
        dx: grid.spacing(),
        l_xi: grid.length(),
        eta,
        truncation,
        a1,
        a0,
        end_rates: divided_rates(&j.matrix, j.mass, 2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenClass {
    Essential,
    Isolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<C>,
    pub essential_cluster: Vec<usize>,
    pub isolated: Vec<usize>,
    /// `None` when there is no isolated eigenvalue.
    pub max_re_isolated: Option<f64>,
    pub max_re_essential: Option<f64>,
    pub weight_eta: f64,
    pub grid_meta: (f64, f64),
    pub tol_ess: f64,
    pub classification_rule: String,
}

impl SpectrumReport {
    pub fn class_of(&self, i: usize) -> EigenClass {
        if self.isolated.contains(&i) {
            EigenClass::Isolated
        } else {
            EigenClass::Essential
        }
    }

    pub fn max_re(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("re,im,class\n");
        for (i, l) in self.eigenvalues.iter().enumerate() {
            let class = match self.class_of(i) {
                EigenClass::Essential => "essential",
                EigenClass::Isolated => "isolated",
            };
            out.push_str(&format!("{},{},{class}\n", l.re, l.im));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Summary<'a> {
            n_eigenvalues: usize,
            n_isolated: usize,
            max_re_isolated: Option<f64>,
            max_re_essential: Option<f64>,
            weight_eta: f64,
            l_xi: f64,
            dx: f64,
            tol_ess: f64,
            classification_rule: &'a str,
        }
        let s = Summary {
            n_eigenvalues: self.eigenvalues.len(),
            n_isolated: self.isolated.len(),
            max_re_isolated: self.max_re_isolated,
            max_re_essential: self.max_re_essential,
            weight_eta: self.weight_eta,
            l_xi: self.grid_meta.0,
            dx: self.grid_meta.1,
            tol_ess: self.tol_ess,
            classification_rule: &self.classification_rule,
        };
        fs::write(path, serde_json::to_string_pretty(&s)?).map_err(|e| Error::io(path, e))
    }
}

fn dense_eigenvalues(m: DMatrix<f64>) -> Result<Vec<C>> {
    let n = m.nrows();
    let schur = Schur::try_new(m, 1e-15, 200 * n.max(10))
        .ok_or_else(|| Error::Eigen(format!("Schur iteration did not converge (n = {n})")))?;
    let ev: Vec<C> = schur.complex_eigenvalues().iter().copied().collect();
    if ev.iter().any(|l| !l.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    Ok(ev)
}

/// Eigenvalues of `B x = λ K x` via the symmetric reduction `K^{-1/2} B K^{-1/2}`.
pub fn generalized_eigenvalues(pair: &LinearizationPair) -> Result<Vec<C>> {
    let s: Vec<f64> = pair.k.iter().map(|k| 1.0 / k.sqrt()).collect();
    let mut m = pair.b.clone();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            m[(i, j)] *= s[i] * s[j];
        }
    }
    dense_eigenvalues(m)
}

/// Eigenvalues of the divided standard problem `K⁻¹ B`.
pub fn divided_eigenvalues(pair: &LinearizationPair) -> Result<Vec<C>> {
    let mut m = pair.b.clone();
    for i in 0..m.nrows() {
        let k = pair.k[i];
        m.row_mut(i).iter_mut().for_each(|x| *x /= k);
    }
    dense_eigenvalues(m)
}

/// Largest relative mismatch between two eigenvalue lists, matching each
/// entry of `a` greedily with its nearest unused partner in `b`.
pub fn spectra_mismatch(a: &[C], b: &[C]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[j].norm().total_cmp(&a[i].norm()));
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for i in order {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, l)| (j, (l - a[i]).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("lists have equal length");
        used[j] = true;
        worst = worst.max(d / a[i].norm().max(1.0));
    }
    worst
}

/// The discrete essential spectrum predicted from the end states.
///
/// Dirichlet: each rate `μ` contributes the segment
/// `μ + a0 − 2/h² + 2√(lo·hi) t`, `t ∈ [−1, 1]`, where `lo, hi` are the
/// off-diagonal stencil weights; this is the spectrum of the truncated
/// constant-coefficient operator, whose top tends to `μ − a1²/4`.
/// Periodic: the closed curve `μ + a0 + σ(k)` of the discrete symbol.
fn distance_to_essential(pair: &LinearizationPair, lambda: C) -> f64 {
    let h = pair.dx;
    let lo = 1.0 / (h * h) - pair.a1 / (2.0 * h);
    let hi = 1.0 / (h * h) + pair.a1 / (2.0 * h);
    let mut best = f64::INFINITY;
    for &mu in &pair.end_rates {
        let centre = mu + pair.a0 - 2.0 / (h * h);
        match pair.truncation {
            Truncation::Dirichlet => {
                let half = C::new(lo * hi, 0.0).sqrt() * 2.0;
                best = best.min(distance_to_segment(lambda, centre - half, centre + half));
            }
            Truncation::Periodic => {
                let n = (8.0 * pair.l_xi / h).ceil() as usize;
                for j in 0..=n {
                    let k = std::f64::consts::PI / h * (2.0 * j as f64 / n as f64 - 1.0);
                    let sym = C::new(2.0 * (k * h).cos() / (h * h), pair.a1 * (k * h).sin() / h);
                    best = best.min((centre + sym - lambda).norm());
                }
            }
        }
    }
    best
}

fn distance_to_segment(p: C, a: C, b: C) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (a + ab * t - p).norm()
}

pub fn tol_ess(pair: &LinearizationPair) -> f64 {
    5.0 * pair.dx.max(1.0 / pair.l_xi)
}

pub fn compute_spectrum(pair: &LinearizationPair, dim_cap: usize) -> Result<SpectrumReport> {
    if pair.dim() > dim_cap {
        return Err(Error::InvalidParameter(format!(
            "matrix dimension {} exceeds the cap {dim_cap}",
            pair.dim()
        )));
    }
    let eigenvalues = generalized_eigenvalues(pair)?;
    let tol = tol_ess(pair);
    let mut essential = Vec::new();
    let mut isolated = Vec::new();
    for (i, l) in eigenvalues.iter().enumerate() {
        if distance_to_essential(pair, *l) > tol {
            isolated.push(i);
        } else {
            essential.push(i);
        }
    }
    let max_of = |idx: &[usize]| {
        idx.iter()
            .map(|&i| eigenvalues[i].re)
            .fold(None, |a: Option<f64>, b| Some(a.map_or(b, |a| a.max(b))))
    };
    Ok(SpectrumReport {
        max_re_isolated: max_of(&isolated),
        max_re_essential: max_of(&essential),
        essential_cluster: essential,
        isolated,
        eigenvalues,
        weight_eta: pair.eta,
        grid_meta: (pair.l_xi, pair.dx),
        tol_ess: tol,
        classification_rule: format!(
            "isolated iff distance to the discrete essential spectrum of the end states ({:?} truncation) exceeds 5*max(dx, 1/L_xi) = {tol:.4}",
            pair.truncation
        ),
    })
}

/// Smallest singular value of `B − λK`, divided by `‖K‖∞`, by inverse
/// iteration on `(A^H A)^{-1}` with banded factorisations. Returns 0 when
/// `B − λK` is exactly singular.
pub fn resonance_probe(pair: &LinearizationPair, lambda: C) -> Result<f64> {
    if pair.truncation != Truncation::Dirichlet {
        return Err(Error::InvalidParameter(
            "the resonance probe needs a Dirichlet truncation".into(),
        ));
    }
    let n = pair.dim();
    let m = pair.components;
    let mut a = Banded::<C>::zeros(n, m, m);
    for i in 0..n {
        let lo = i.saturating_sub(m);
        let hi = (i + m).min(n - 1);
        for j in lo..=hi {
            let mut x = C::new(pair.b[(i, j)], 0.0);
            if i == j {
                x -= lambda * pair.k[i];
            }
            if x != C::new(0.0, 0.0) {
                a.set(i, j, x);
            }
        }
    }
    let k_norm = pair.k.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let adj = a.adjoint();
    let (lu, lu_h) = match (a.lu(), adj.lu()) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(Error::Singular(_)), _) | (_, Err(Error::Singular(_))) => return Ok(0.0),
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let mut x: Vec<C> = (0..n)
        .map(|i| C::new(1.0 + 0.3 * ((i * 7919) % 101) as f64 / 101.0, 0.0))
        .collect();
    let norm = |v: &[C]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nx = norm(&x);
    x.iter_mut().for_each(|z| *z /= nx);
    let mut sigma = f64::INFINITY;
    for _ in 0..300 {
        let y = lu.solve(&lu_h.solve(&x));
        let ny = norm(&y);
        if !(ny.is_finite() && ny > 0.0) {
            return Ok(0.0);
        }
        let next = 1.0 / ny.sqrt();
        x = y.into_iter().map(|z| z / ny).collect();
        let done = (next - sigma).abs() <= 1e-12 * next;
        sigma = next;
        if done {
            break;
        }
    }
    Ok(sigma / k_norm)
}
