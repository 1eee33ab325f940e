//! Total cancer mass: simulated, the piecewise-linear front approximation,
//! and its sensitivity to the TC death rate.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{predicted_speeds, ModelParams, Regime};
use crate::pde::{Grid1D, RunRecord, StateField};

/// Minimum spacing of the alpha grid for empirical derivatives.
pub const MIN_ALPHA_SPACING: f64 = 0.05;

/// Trapezoid rule for the integral of `u + v` over the grid.
pub fn total_mass(s: &StateField, grid: &Grid1D) -> f64 {
    let n = s.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = (1..n - 1).map(|i| s.u[i] + s.v[i]).sum();
    let ends = 0.5 * (s.u[0] + s.v[0] + s.u[n - 1] + s.v[n - 1]);
    grid.dx() * (inner + ends)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSeries {
    pub taus: Vec<f64>,
    pub mass: Vec<f64>,
    pub alpha: f64,
    pub eps: f64,
    pub x0: f64,
    pub length: f64,
}

impl MassSeries {
    /// Collects the mass samples of a run.
    pub fn from_run(run: &RunRecord, x0: f64) -> Result<Self> {
        let (taus, mass): (Vec<f64>, Vec<f64>) = run
            .samples
            .iter()
            .filter_map(|s| s.mass.map(|m| (s.time, m)))
            .unzip();
        if taus.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, have: 0 });
        }
        Ok(Self {
            taus,
            mass,
            alpha: run.params.alpha(),
            eps: run.params.eps(),
            x0,
            length: run.grid.length(),
        })
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.alpha, self.eps)
    }

    /// Writes `tau,mass,mass_app` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let p = self.params()?;
        let mut out = String::from("tau,mass,mass_app\n");
        for (t, m) in self.taus.iter().zip(&self.mass) {
            let app = approx_mass(*t, &p, self.x0, self.length)?;
            out.push_str(&format!("{t},{m},{app}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "tau must be >= 0, got {tau}"
        )))
    }
}

/// Front positions `min(x0 + c tau, L)`.
fn saturating(x0: f64, c: f64, tau: f64, l: f64) -> f64 {
    (x0 + c * tau).min(l)
}

/// Mass predicted by treating both fronts as sharp steps moving at their
/// asymptotic speeds.
pub fn approx_mass(tau: f64, p: &ModelParams, x0: f64, l: f64) -> Result<f64> {
    check_tau(tau)?;
    let s = predicted_speeds(p);
    Ok(match p.regime() {
        Regime::Staged => {
            let c_pt = s.c_pt.expect("staged regime has a TC front");
            let sc = saturating(x0, s.c_sc, tau, l);
            let pt = saturating(x0, c_pt, tau, l);
            sc + (1.0 - p.alpha()) * (pt - sc)
        }
        Regime::TcExtinction => saturating(x0, s.c_pc, tau, l),
    })
}

fn require_staged(p: &ModelParams) -> Result<f64> {
    match (p.regime(), predicted_speeds(p).c_pt) {
        (Regime::Staged, Some(c)) => Ok(c),
        _ => Err(Error::Regime(format!(
            "alpha = {} is not in the staged regime for eps = {}",
            p.alpha(),
            p.eps()
        ))),
    }
}

/// Analytic `d M_app / d alpha`, piecewise in tau.
pub fn mass_sensitivity_app(tau: f64, p: &ModelParams, x0: f64, l: f64) -> Result<f64> {
    check_tau(tau)?;
    let c_pt = require_staged(p)?;
    let c_sc = predicted_speeds(p).c_sc;
    let pt_saturated = x0 + c_pt * tau >= l;
    let sc_saturated = x0 + c_sc * tau >= l;
    Ok(if !pt_saturated {
        1.5 * (c_sc - c_pt) * tau
    } else if !sc_saturated {
        x0 + 3.0 * p.alpha().sqrt() * tau - l
    } else {
        0.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParadoxWindow {
    /// Mass decreases in alpha up to here.
    pub tau_decreasing_until: f64,
    /// Mass increases in alpha from here until saturation.
    pub tau_increasing_from: f64,
    /// Both fronts have reached the boundary.
    pub tau_saturated_from: f64,
    /// The TC front reaches the boundary.
    pub tau_pt_saturation: f64,
}

pub fn paradox_window(p: &ModelParams, x0: f64, l: f64) -> Result<ParadoxWindow> {
    let c_pt = require_staged(p)?;
    if !(l > x0) {
        return Err(Error::InvalidParameter(format!(
            "need L > x0, got L = {l}, x0 = {x0}"
        )));
    }
    let ra = p.alpha().sqrt();
    let gap = l - x0;
    let pt_sat = gap / c_pt;
    let turn = pt_sat.max(gap / (3.0 * ra));
    Ok(ParadoxWindow {
        tau_decreasing_until: turn,
        tau_increasing_from: turn,
        tau_saturated_from: gap / (2.0 * ra),
        tau_pt_saturation: pt_sat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub tau: f64,
    pub alpha: f64,
    pub empirical: f64,
    /// `None` outside the staged regime.
    pub analytic: Option<f64>,
}

/// Central differences in alpha at every tau of a sweep sorted by alpha.
///
/// Only interior alpha values get a derivative.
pub fn empirical_mass_sensitivity(sweep: &[MassSeries]) -> Result<Vec<SensitivityRow>> {
    if sweep.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            have: sweep.len(),
        });
    }
    let mut sorted: Vec<&MassSeries> = sweep.iter().collect();
    sorted.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let taus = &sorted[0].taus;
    for s in &sorted {
        let same = s.taus.len() == taus.len()
            && s.taus
                .iter()
                .zip(taus)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1.0));
        if !same || s.mass.len() != s.taus.len() {
            return Err(Error::InvalidParameter(format!(
                "tau grid of alpha = {} does not match the sweep",
                s.alpha
            )));
        }
    }
    for w in sorted.windows(2) {
        if w[1].alpha - w[0].alpha < MIN_ALPHA_SPACING - 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "alpha spacing {} is below {MIN_ALPHA_SPACING}",
                w[1].alpha - w[0].alpha
            )));
        }
    }
    let mut rows = Vec::new();
    for (k, tau) in taus.iter().enumerate() {
        for j in 1..sorted.len() - 1 {
            let (lo, mid, hi) = (sorted[j - 1], sorted[j], sorted[j + 1]);
            let d = (hi.mass[k] - lo.mass[k]) / (hi.alpha - lo.alpha);
            let analytic = mid
                .params()
                .ok()
                .and_then(|p| mass_sensitivity_app(*tau, &p, mid.x0, mid.length).ok());
            rows.push(SensitivityRow {
                tau: *tau,
                alpha: mid.alpha,
                empirical: d,
                analytic,
            });
        }
    }
    Ok(rows)
}

/// Writes `tau,alpha,dM_dalpha_emp,dM_dalpha_app`; the last column is empty
/// outside the staged regime.
pub fn write_sensitivity_csv(rows: &[SensitivityRow], path: &Path) -> Result<()> {
    let mut out = String::from("tau,alpha,dM_dalpha_emp,dM_dalpha_app\n");
    for r in rows {
        let app = r.analytic.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{app}\n", r.tau, r.alpha, r.empirical));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
