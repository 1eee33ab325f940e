//! Experiment configuration: a TOML document with `[section]` headers.
//!
//! Every section except `[model]` has defaults; unknown keys are rejected.
//! Serialising a parsed config yields its normalised form with all
//! defaults written out.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::front::{Component, FrontKind};
use crate::model::{ModelParams, Regime};
use crate::pde::{Grid1D, RightBoundary, Scenario, Scheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub wave: WaveSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub length: f64,
    pub n_points: usize,
    pub bc: RightBoundary,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            length: 300.0,
            n_points: 3001,
            bc: RightBoundary::Neumann,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    /// `safety` times the stability bound.
    Stable,
    /// The fixed step `dt`, validated against the bound.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub t_end: f64,
    pub scenario: Scenario,
    pub x0: f64,
    pub scheme: Scheme,
    pub dt_policy: DtPolicy,
    pub safety: f64,
    pub dt: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            t_end: 120.0,
            scenario: Scenario::SecondaryCsc,
            x0: 10.0,
            scheme: Scheme::ImexCn,
            dt_policy: DtPolicy::Stable,
            safety: 0.9,
            dt: 0.0,
        }
    }
}

/// A level set to follow and the front it stands for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontSpec {
    pub kind: FrontKind,
    pub component: Component,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Fronts to track; empty means the scenario's natural fronts.
    pub fronts: Vec<FrontSpec>,
    /// Fits use `[fit_start_fraction · t_last, t_last]` of each trace.
    pub fit_start_fraction: f64,
    /// Explicit fit window overriding the fraction rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    /// Death rates of the mass sweep, at `model.eps`.
    pub alphas: Vec<f64>,
    /// Wavenumber range and resolution of essential-spectrum curves.
    pub k_max: f64,
    pub n_k: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            fronts: Vec::new(),
            fit_start_fraction: 1.0 / 3.0,
            fit_window: None,
            alphas: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            k_max: 10.0,
            n_k: 1001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveSection {
    pub xi_min: f64,
    pub xi_max: f64,
    pub dx: f64,
    /// Additional ε values for the singular-limit comparison.
    pub eps_ladder: Vec<f64>,
}

impl Default for WaveSection {
    fn default() -> Self {
        Self {
            xi_min: -50.0,
            xi_max: 150.0,
            dx: 0.05,
            eps_ladder: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub xi_min: f64,
    pub xi_max: f64,
    pub dx: f64,
    pub dim_cap: usize,
    /// Spacings of the resonance-probe refinement.
    pub probe_dx: Vec<f64>,
    /// Number of weights in the sweep from 0 to η.
    pub sweep_steps: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            xi_min: -10.0,
            xi_max: 50.0,
            dx: 0.1,
            dim_cap: crate::spectrum::DEFAULT_DIM_CAP,
            probe_dx: vec![0.1, 0.05, 0.025],
            sweep_steps: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub cadence: f64,
    pub snapshot_times: Vec<f64>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            cadence: 0.5,
            snapshot_times: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Normalised TOML with every default spelled out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.model.alpha, self.model.eps).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn params_at(&self, alpha: f64) -> Result<ModelParams> {
        ModelParams::new(alpha, self.model.eps).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.grid.length, self.grid.n_points, self.grid.bc)
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Configured fronts, or the ones the scenario produces.
    pub fn fronts(&self, p: &ModelParams) -> Vec<FrontSpec> {
        if !self.analysis.fronts.is_empty() {
            return self.analysis.fronts.clone();
        }
        let tc_level = 0.5 * (1.0 - p.alpha()).max(0.0);
        let pt = FrontSpec {
            kind: FrontKind::Pt,
            component: Component::V,
            level: tc_level,
        };
        let sc = FrontSpec {
            kind: FrontKind::Sc,
            component: Component::U,
            level: 0.5,
        };
        let pc = FrontSpec {
            kind: FrontKind::Pc,
            component: Component::U,
            level: 0.5,
        };
        match self.run.scenario {
            Scenario::PrimaryTc => vec![pt],
            Scenario::SecondaryCsc => vec![sc],
            Scenario::PrimaryCsc | Scenario::MassExperiment => match p.regime() {
                Regime::Staged => vec![pt, sc],
                Regime::TcExtinction => vec![pc],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.params()?;
        self.grid()?;
        let r = &self.run;
        if !(r.t_end >= 0.0 && r.t_end.is_finite()) {
            return bad(format!(
                "run.t_end must be finite and >= 0, got {}",
                r.t_end
            ));
        }
        if !(r.x0 > 0.0 && r.x0 < self.grid.length) {
            return bad(format!(
                "run.x0 = {} must lie inside (0, {})",
                r.x0, self.grid.length
            ));
        }
        if !(r.safety > 0.0 && r.safety <= 1.0) {
            return bad(format!("run.safety must lie in (0, 1], got {}", r.safety));
        }
        if r.dt_policy == DtPolicy::Fixed && !(r.dt > 0.0) {
            return bad("run.dt must be positive with dt_policy = \"fixed\"".into());
        }
        let a = &self.analysis;
        if !(a.fit_start_fraction >= 0.0 && a.fit_start_fraction < 1.0) {
            return bad(format!(
                "analysis.fit_start_fraction must lie in [0, 1), got {}",
                a.fit_start_fraction
            ));
        }
        if let Some([t0, t1]) = a.fit_window {
            if !(t1 > t0) {
                return bad(format!("analysis.fit_window [{t0}, {t1}] is empty"));
            }
        }
        for f in &a.fronts {
            if !(f.level > 0.0 && f.level.is_finite()) {
                return bad(format!("front level must be positive, got {}", f.level));
            }
        }
        if a.alphas.iter().any(|x| !(*x > 0.0)) {
            return bad("analysis.alphas must be positive".into());
        }
        if !(a.k_max > 0.0) || a.n_k < 2 {
            return bad("analysis.k_max must be positive and n_k >= 2".into());
        }
        let w = &self.wave;
        if !(w.xi_max > w.xi_min && w.dx > 0.0) {
            return bad("wave grid is empty".into());
        }
        if w.eps_ladder.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return bad("wave.eps_ladder entries must lie in (0, 1)".into());
        }
        let s = &self.spectrum;
        if !(s.xi_max > s.xi_min && s.dx > 0.0) || s.probe_dx.iter().any(|d| !(*d > 0.0)) {
            return bad("spectrum grid is empty".into());
        }
        if s.xi_min < w.xi_min || s.xi_max > w.xi_max {
            return bad("spectrum window must lie inside the wave grid".into());
        }
        let o = &self.output;
        if !(o.cadence > 0.0) {
            return bad(format!(
                "output.cadence must be positive, got {}",
                o.cadence
            ));
        }
        if o.snapshot_times.iter().any(|t| !(*t >= 0.0)) {
            return bad("output.snapshot_times must be >= 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nalpha = 0.75\neps = 0.1\n";

    #[test]
    fn defaults_fill_missing_sections() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.grid, GridSection::default());
        assert_eq!(c.run.scenario, Scenario::SecondaryCsc);
        assert_eq!(c.analysis.alphas.len(), 7);
    }

    #[test]
    fn round_trip_is_stable() {
        let c = ExperimentConfig::parse(
            "[model]\nalpha = 1.25\neps = 0.1\n[run]\nscenario = \"primary_csc\"\nt_end = 40.0\n\
             [analysis]\nfit_window = [10.0, 40.0]\n\
             [[analysis.fronts]]\nkind = \"pc\"\ncomponent = \"u\"\nlevel = 0.5\n",
        )
        .unwrap();
        let text = c.to_toml().unwrap();
        let again = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(c, again);
        assert_eq!(text, again.to_toml().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let e =
            ExperimentConfig::parse("[model]\nalpha = 0.75\neps = 0.1\nbeta = 2\n").unwrap_err();
        assert!(e.is_config());
        assert!(e.to_string().contains("line 4"), "{e}");
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "[model]\nalpha = -1\neps = 0.1\n",
            "[model]\nalpha = 0.5\neps = 0.1\n[run]\nx0 = 400.0\n",
            "[model]\nalpha = 0.5\neps = 0.1\n[output]\ncadence = 0\n",
        ] {
            assert!(
                ExperimentConfig::parse(text).unwrap_err().is_config(),
                "{text}"
            );
        }
    }

    #[test]
    fn natural_fronts_follow_the_regime() {
        let mut c = ExperimentConfig::parse(MINIMAL).unwrap();
        c.run.scenario = Scenario::MassExperiment;
        assert_eq!(c.fronts(&c.params().unwrap()).len(), 2);
        c.model.alpha = 1.25;
        let f = c.fronts(&c.params().unwrap());
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, FrontKind::Pc);
    }
}
