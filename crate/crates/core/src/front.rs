//! Level-set front positions and speed fits with a logarithmic correction.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SpeedPrediction;
use crate::pde::{FrontProbe, Grid1D, RunRecord, StateField};

pub const MIN_TRACE_SAMPLES: usize = 20;
pub const MIN_FIT_SAMPLES: usize = 10;
/// Earliest time at which a log-corrected fit may start.
pub const MIN_LOG_FIT_TIME: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    U,
    V,
    Sum,
}

impl Component {
    #[inline]
    pub fn value(self, s: &StateField, i: usize) -> f64 {
        match self {
            Component::U => s.u[i],
            Component::V => s.v[i],
            Component::Sum => s.u[i] + s.v[i],
        }
    }
}

/// Rightmost position where `component` crosses `level`, linearly interpolated.
pub fn crossing_position(
    s: &StateField,
    grid: &Grid1D,
    component: Component,
    level: f64,
) -> Option<f64> {
    let n = s.len();
    for i in (0..n.saturating_sub(1)).rev() {
        let a = component.value(s, i) - level;
        let b = component.value(s, i + 1) - level;
        if b == 0.0 {
            return Some(grid.x(i + 1));
        }
        if a * b < 0.0 {
            let frac = a / (a - b);
            return Some(grid.x(i) + frac * grid.dx());
        }
    }
    if n > 0 && component.value(s, 0) == level {
        return Some(grid.x(0));
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontTrace {
    pub component: Component,
    pub level: f64,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub hit_boundary_at: Option<f64>,
}

impl FrontTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Last time usable for fitting: just before the boundary was reached.
    pub fn usable_until(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,position\n");
        for (t, x) in self.times.iter().zip(&self.positions) {
            out.push_str(&format!("{t},{x}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Assembles the trace of one probe from a run.
///
/// Samples without a crossing are skipped. The trace stops at the first
/// sample beyond `L - 5 dx`, which is recorded in `hit_boundary_at`.
pub fn track(run: &RunRecord, component: Component, level: f64) -> Result<FrontTrace> {
    let probe = FrontProbe { component, level };
    let idx = run.probes.iter().position(|p| *p == probe);
    let limit = run.grid.end() - 5.0 * run.grid.dx();
    let mut trace = FrontTrace {
        component,
        level,
        times: Vec::new(),
        positions: Vec::new(),
        hit_boundary_at: None,
    };
    let mut have = 0;
    for sample in &run.samples {
        let x = match idx {
            Some(k) => sample.positions[k],
            None => {
                return Err(Error::InvalidParameter(format!(
                    "run has no probe for {component:?} at level {level}"
                )))
            }
        };
        let Some(x) = x else { continue };
        have += 1;
        if x > limit {
            trace.hit_boundary_at = Some(sample.time);
            break;
        }
        trace.times.push(sample.time);
        trace.positions.push(x);
    }
    if have < MIN_TRACE_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_TRACE_SAMPLES,
            have,
        });
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    LinearOnly,
    WithLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedFit {
    pub c: f64,
    pub log_coeff: f64,
    pub x_inf: f64,
    pub window: (f64, f64),
    pub rms_residual: f64,
}

impl SpeedFit {
    pub fn position(&self, t: f64) -> f64 {
        let log = if self.log_coeff == 0.0 {
            0.0
        } else {
            self.log_coeff * t.ln()
        };
        self.c * t + log + self.x_inf
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Least-squares fit of `c t + b log t + x_inf` (or `c t + x_inf`) on `window`.
pub fn fit_speed(trace: &FrontTrace, window: (f64, f64), model: FitModel) -> Result<SpeedFit> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(Error::Degenerate(format!("empty window [{t0}, {t1}]")));
    }
    if model == FitModel::WithLog && t0 < MIN_LOG_FIT_TIME {
        return Err(Error::InvalidParameter(format!(
            "log-corrected fits need t_min >= {MIN_LOG_FIT_TIME}, got {t0}"
        )));
    }
    let eps = 1e-9 * t1.abs().max(1.0);
    let pts: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&trace.positions)
        .filter(|(t, _)| **t >= t0 - eps && **t <= t1 + eps)
        .map(|(t, x)| (*t, *x))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            have: pts.len(),
        });
    }
    if pts.iter().any(|(t, _)| *t <= 0.0) && model == FitModel::WithLog {
        return Err(Error::Degenerate("log t undefined for t <= 0".into()));
    }

    // centre and scale the columns so the conditioning check is meaningful
    let cols = match model {
        FitModel::LinearOnly => 2,
        FitModel::WithLog => 3,
    };
    let m = pts.len();
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let ts = (t1 - t0).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(m, cols, |i, j| {
        let t = pts[i].0;
        match j {
            0 => 1.0,
            1 => (t - tm) / ts,
            _ => t.ln(),
        }
    });
    let b = DVector::from_iterator(m, pts.iter().map(|p| p.1));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::Degenerate(format!(
            "condition number {:.3e} over window [{t0}, {t1}]",
            smax / smin
        )));
    }
    let coef = svd
        .solve(&b, 1e-14 * smax)
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    let slope = coef[1] / ts;
    let log_coeff = if cols == 3 { coef[2] } else { 0.0 };
    let x_inf = coef[0] - slope * tm;
    let resid = &a * &coef - &b;
    let rms = (resid.norm_squared() / m as f64).sqrt();
    Ok(SpeedFit {
        c: slope,
        log_coeff,
        x_inf,
        window,
        rms_residual: rms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontKind {
    /// Primary TC front.
    Pt,
    /// Secondary CSC front.
    Sc,
    /// Primary CSC front.
    Pc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BramsonDiagnostics {
    pub which: FrontKind,
    pub c_fit: f64,
    pub c_pred: f64,
    pub c_rel_error: f64,
    pub log_coeff_fit: f64,
    pub log_coeff_pred: f64,
    pub log_coeff_rel_error: f64,
}

/// Predicted Bramson coefficient `-3 / (2 eta)`.
pub fn bramson_coefficient(eta: f64) -> f64 {
    -3.0 / (2.0 * eta)
}

/// Relative errors of a fit against the predicted speed and log coefficient.
/// NaN when the prediction does not exist (e.g. TC front with alpha > 1).
pub fn bramson_check(
    fit: &SpeedFit,
    pred: &SpeedPrediction,
    which: FrontKind,
) -> BramsonDiagnostics {
    let (c, eta) = match which {
        FrontKind::Pt => (
            pred.c_pt.unwrap_or(f64::NAN),
            pred.eta_pt.unwrap_or(f64::NAN),
        ),
        FrontKind::Sc => (pred.c_sc, pred.eta_sc),
        FrontKind::Pc => (pred.c_pc, pred.eta_pc),
    };
    let b = bramson_coefficient(eta);
    BramsonDiagnostics {
        which,
        c_fit: fit.c,
        c_pred: c,
        c_rel_error: ((fit.c - c) / c).abs(),
        log_coeff_fit: fit.log_coeff,
        log_coeff_pred: b,
        log_coeff_rel_error: ((fit.log_coeff - b) / b).abs(),
    }
}
