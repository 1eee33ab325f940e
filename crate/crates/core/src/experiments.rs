//! Config-driven experiments. Each command writes its artifacts into an
//! output directory and finishes with `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DtPolicy, ExperimentConfig, FrontSpec};
use crate::dispersion::{
    essential_spectrum_curve, factor_speeds, find_double_root, linear_spreading_speed,
    DispersionRoot, LinearState,
};
use crate::error::{Error, Result};
use crate::front::{bramson_check, fit_speed, track, Component, FitModel, FrontKind, FrontTrace};
use crate::mass::{
    empirical_mass_sensitivity, paradox_window, write_sensitivity_csv, MassSeries, SensitivityRow,
};
use crate::model::{predicted_speeds, ModelParams, Regime, SpeedPrediction};
use crate::pde::{
    initial_step_data, integrate, FrontProbe, Grid1D, Observers, RunRecord, Scenario, SnapshotPlan,
    StepControl,
};
use crate::spectrum::{
    build_constant_linearization, build_weighted_linearization, compute_spectrum, resonance_probe,
    SpectralGrid, Truncation,
};
use crate::wave::{
    check_wake_bound, solve_full_front, solve_reduced_front, EdgeFit, WaveKind, WaveProfile,
};

pub const MANIFEST: &str = "manifest.json";

/// Git-style content hash: SHA-256 of `"blob <len>\0" ++ bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("sha256:{}", hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub artifacts: Vec<Artifact>,
    pub wall_time_s: f64,
}

fn collect_files(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, root, out)?;
        } else if path != root.join(MANIFEST) {
            out.push(path);
        }
    }
    Ok(())
}

/// Hashes every file under `out` and writes the manifest.
pub fn write_manifest(
    out: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    wall_time_s: f64,
) -> Result<Manifest> {
    let mut files = Vec::new();
    collect_files(out, out, &mut files)?;
    files.sort();
    let mut artifacts = Vec::with_capacity(files.len());
    for f in files {
        let bytes = fs::read(&f).map_err(|e| Error::io(&f, e))?;
        let rel = f.strip_prefix(out).unwrap_or(&f);
        artifacts.push(Artifact {
            path: rel.to_string_lossy().replace('\\', "/"),
            hash: content_hash(&bytes),
        });
    }
    let manifest = Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        config_hash: content_hash(cfg.to_toml()?.as_bytes()),
        artifacts,
        wall_time_s,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn front_name(f: &FrontSpec) -> String {
    let kind = match f.kind {
        FrontKind::Pt => "pt",
        FrontKind::Sc => "sc",
        FrontKind::Pc => "pc",
    };
    let comp = match f.component {
        Component::U => "u",
        Component::V => "v",
        Component::Sum => "sum",
    };
    format!("{kind}_{comp}")
}

fn step_control(cfg: &ExperimentConfig, grid: &Grid1D, p: &ModelParams) -> Result<StepControl> {
    match cfg.run.dt_policy {
        DtPolicy::Stable => StepControl::stable(grid, p, cfg.run.scheme, cfg.run.safety),
        DtPolicy::Fixed => {
            let ctl = StepControl {
                dt: cfg.run.dt,
                scheme: cfg.run.scheme,
                safety: cfg.run.safety,
            };
            ctl.validate(grid, p)
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(ctl)
        }
    }
}

/// Integrates the configured scenario with the given fronts and options.
pub fn run_scenario(
    cfg: &ExperimentConfig,
    p: &ModelParams,
    scenario: Scenario,
    fronts: &[FrontSpec],
    record_mass: bool,
    snapshots: Option<SnapshotPlan>,
) -> Result<RunRecord> {
    let grid = cfg.grid()?;
    let ctl = step_control(cfg, &grid, p)?;
    let initial = initial_step_data(&grid, cfg.run.x0, p, scenario)?;
    let obs = Observers {
        cadence: cfg.output.cadence,
        probes: fronts
            .iter()
            .map(|f| FrontProbe {
                component: f.component,
                level: f.level,
            })
            .collect(),
        record_mass,
        snapshots,
    };
    integrate(p, &grid, &ctl, initial, cfg.run.t_end, &obs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub front: FrontSpec,
    pub samples: usize,
    pub first_position: Option<f64>,
    pub last_position: Option<f64>,
    pub hit_boundary_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub alpha: f64,
    pub eps: f64,
    pub regime: Regime,
    pub dt: f64,
    pub steps: usize,
    pub fronts: Vec<TraceSummary>,
    pub snapshots: usize,
    pub wall_time_s: f64,
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<SimulateSummary> {
    let started = Instant::now();
    ensure_dir(out)?;
    let p = cfg.params()?;
    let fronts = cfg.fronts(&p);
    let snapshots = if cfg.output.snapshot_times.is_empty() {
        None
    } else {
        let dir = out.join("snapshots");
        ensure_dir(&dir)?;
        Some(SnapshotPlan {
            dir,
            times: cfg.output.snapshot_times.clone(),
        })
    };
    let run = run_scenario(cfg, &p, cfg.run.scenario, &fronts, true, snapshots)?;
    let mut summaries = Vec::new();
    for f in &fronts {
        let trace = raw_trace(&run, f);
        trace.write_csv(&out.join(format!("front_{}.csv", front_name(f))))?;
        summaries.push(TraceSummary {
            front: *f,
            samples: trace.len(),
            first_position: trace.positions.first().copied(),
            last_position: trace.positions.last().copied(),
            hit_boundary_at: trace.hit_boundary_at,
        });
    }
    MassSeries::from_run(&run, cfg.run.x0)?.write_csv(&out.join("mass.csv"))?;
    run.final_state
        .write_csv(&run.grid, &out.join("final_state.csv"))?;
    let summary = SimulateSummary {
        alpha: p.alpha(),
        eps: p.eps(),
        regime: p.regime(),
        dt: run.dt,
        steps: run.steps,
        fronts: summaries,
        snapshots: run.snapshot_files.len(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_manifest(out, "simulate", cfg, started.elapsed().as_secs_f64())?;
    Ok(summary)
}

/// Trace for export: same as `track`, but never fails on short traces.
fn raw_trace(run: &RunRecord, f: &FrontSpec) -> FrontTrace {
    track(run, f.component, f.level).unwrap_or_else(|_| {
        let i = run
            .probes
            .iter()
            .position(|q| q.component == f.component && q.level == f.level);
        let (times, positions) = run
            .samples
            .iter()
            .filter_map(|s| i.and_then(|i| s.positions[i]).map(|x| (s.time, x)))
            .unzip();
        FrontTrace {
            component: f.component,
            level: f.level,
            times,
            positions,
            hit_boundary_at: None,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRow {
    pub front: FrontSpec,
    pub window: (f64, f64),
    pub predicted: f64,
    pub measured: f64,
    pub rel_err: f64,
    pub measured_linear_only: f64,
    pub log_coeff_predicted: f64,
    pub log_coeff_measured: f64,
    pub log_coeff_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedsSummary {
    pub alpha: f64,
    pub eps: f64,
    pub regime: Regime,
    pub prediction: SpeedPrediction,
    pub fronts: Vec<SpeedRow>,
}

/// Fit window of a trace: the configured window, or the last
/// `1 − fit_start_fraction` of the usable time span.
pub fn fit_window(cfg: &ExperimentConfig, trace: &FrontTrace) -> (f64, f64) {
    match cfg.analysis.fit_window {
        Some([a, b]) => (a, b.min(trace.usable_until())),
        None => {
            let t1 = trace.usable_until();
            (cfg.analysis.fit_start_fraction * t1, t1)
        }
    }
}

pub fn measure_speeds(
    cfg: &ExperimentConfig,
    run: &RunRecord,
    fronts: &[FrontSpec],
) -> Result<Vec<SpeedRow>> {
    let pred = predicted_speeds(&run.params);
    let mut rows = Vec::new();
    for f in fronts {
        let trace = track(run, f.component, f.level)?;
        let window = fit_window(cfg, &trace);
        let log = fit_speed(&trace, window, FitModel::WithLog)?;
        let lin = fit_speed(&trace, window, FitModel::LinearOnly)?;
        let d = bramson_check(&log, &pred, f.kind);
        rows.push(SpeedRow {
            front: *f,
            window,
            predicted: d.c_pred,
            measured: log.c,
            rel_err: d.c_rel_error,
            measured_linear_only: lin.c,
            log_coeff_predicted: d.log_coeff_pred,
            log_coeff_measured: log.log_coeff,
            log_coeff_rel_err: d.log_coeff_rel_error,
        });
    }
    Ok(rows)
}

pub fn speeds(cfg: &ExperimentConfig, out: &Path) -> Result<SpeedsSummary> {
    let started = Instant::now();
    ensure_dir(out)?;
    let p = cfg.params()?;
    let fronts = cfg.fronts(&p);
    let run = run_scenario(cfg, &p, cfg.run.scenario, &fronts, false, None)?;
    for f in &fronts {
        raw_trace(&run, f).write_csv(&out.join(format!("front_{}.csv", front_name(f))))?;
    }
    let summary = SpeedsSummary {
        alpha: p.alpha(),
        eps: p.eps(),
        regime: p.regime(),
        prediction: predicted_speeds(&p),
        fronts: measure_speeds(cfg, &run, &fronts)?,
    };
    write_json(&out.join("speeds.json"), &summary)?;
    write_manifest(out, "speeds", cfg, started.elapsed().as_secs_f64())?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDispersion {
    pub state: LinearState,
    pub factor_speeds: [Option<f64>; 2],
    pub spreading_speed: Option<f64>,
    pub double_root: Option<DispersionRoot>,
    /// Front whose weighted essential spectrum lives on this state.
    pub curve_speed: f64,
    pub curve_eta: f64,
    pub curve_max_re: f64,
    pub curve_argmax_k: f64,
    pub curve_no_unstable: bool,
    pub curve_touches_only_at_origin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionSummary {
    pub alpha: f64,
    pub eps: f64,
    pub prediction: SpeedPrediction,
    pub states: Vec<StateDispersion>,
}

fn state_dispersion(
    cfg: &ExperimentConfig,
    p: &ModelParams,
    state: LinearState,
    curve: (f64, f64),
    out: &Path,
    name: &str,
) -> Result<StateDispersion> {
    let speed = linear_spreading_speed(state, p).ok();
    let double_root = match speed {
        Some(s) => Some(find_double_root(
            state,
            s.c_star,
            p,
            (Complex64::new(0.0, 0.0), Complex64::new(-s.eta, 0.0)),
        )?),
        None => None,
    };
    let (c, eta) = curve;
    let sc = essential_spectrum_curve(state, eta, c, p, cfg.analysis.k_max, cfg.analysis.n_k)?;
    sc.write_csv(&out.join(format!("curve_{name}.csv")))?;
    Ok(StateDispersion {
        state,
        factor_speeds: factor_speeds(state, p),
        spreading_speed: speed.map(|s| s.c_star),
        double_root,
        curve_speed: c,
        curve_eta: eta,
        curve_max_re: sc.max_re,
        curve_argmax_k: sc.argmax_k,
        curve_no_unstable: sc.no_unstable,
        curve_touches_only_at_origin: sc.touches_only_at_origin,
    })
}

pub fn dispersion(cfg: &ExperimentConfig, out: &Path) -> Result<DispersionSummary> {
    let started = Instant::now();
    ensure_dir(out)?;
    let p = cfg.params()?;
    let pred = predicted_speeds(&p);
    let mut states = Vec::new();
    // the CSC front invades the pure TC state only while that state exists
    if p.alpha() < 1.0 {
        states.push(state_dispersion(
            cfg,
            &p,
            LinearState::PureTc,
            (pred.c_sc, pred.eta_sc),
            out,
            "pure_tc",
        )?);
    }
    let lead = match p.regime() {
        Regime::Staged => (
            pred.c_pt.unwrap_or(pred.c_pc),
            pred.eta_pt.unwrap_or(pred.eta_pc),
        ),
        Regime::TcExtinction => (pred.c_pc, pred.eta_pc),
    };
    states.push(state_dispersion(
        cfg,
        &p,
        LinearState::CancerFree,
        lead,
        out,
        "cancer_free",
    )?);
    let summary = DispersionSummary {
        alpha: p.alpha(),
        eps: p.eps(),
        prediction: pred,
        states,
    };
    write_json(&out.join("dispersion.json"), &summary)?;
    write_manifest(out, "dispersion", cfg, started.elapsed().as_secs_f64())?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwSummary {
    pub kind: WaveKind,
    pub alpha: f64,
    pub eps: f64,
    pub c: f64,
    pub eta: f64,
    pub steady_residual: f64,
    pub iterations: usize,
    pub edge_fit: Option<EdgeFit>,
    pub wake_bound_ok: bool,
    pub min_sum: f64,
    /// Max-norm distance to the reduced front for `ε` and each ladder value.
    pub reduced_distance: Vec<(f64, f64)>,
}

fn wave_grid(cfg: &ExperimentConfig) -> Result<Grid1D> {
    let w = &cfg.wave;
    Grid1D::spanning(
        w.xi_min,
        w.xi_max,
        w.dx,
        crate::pde::RightBoundary::Dirichlet0,
    )
    .map_err(|e| Error::Config(e.to_string()))
}

fn wave_kind(p: &ModelParams) -> WaveKind {
    if p.alpha() < 1.0 {
        WaveKind::SecondaryCsc
    } else {
        WaveKind::PrimaryCsc
    }
}

/// The front the spectral and profile commands work on.
pub fn solve_configured_front(cfg: &ExperimentConfig) -> Result<WaveProfile> {
    let p = cfg.params()?;
    solve_full_front(&p, wave_kind(&p), &wave_grid(cfg)?)
}

pub fn tw(cfg: &ExperimentConfig, out: &Path) -> Result<TwSummary> {
    let started = Instant::now();
    ensure_dir(out)?;
    let p = cfg.params()?;
    let grid = wave_grid(cfg)?;
    let kind = wave_kind(&p);
    let front = solve_full_front(&p, kind, &grid)?;
    front.write_csv(&out.join("profile.csv"))?;
    front.write_metadata(&out.join("profile_meta.json"))?;
    let mut reduced_distance = Vec::new();
    if kind == WaveKind::SecondaryCsc {
        let reduced = solve_reduced_front(p.alpha(), &grid)?;
        reduced.write_csv(&out.join("reduced_profile.csv"))?;
        reduced_distance.push((p.eps(), front.distance_to(&reduced)?));
        for &eps in &cfg.wave.eps_ladder {
            let q = cfg_params(p.alpha(), eps)?;
            let f = solve_full_front(&q, kind, &grid)?;
            f.write_csv(&out.join(format!("profile_eps_{eps}.csv")))?;
            reduced_distance.push((eps, f.distance_to(&reduced)?));
        }
    }
    let summary = TwSummary {
        kind,
        alpha: p.alpha(),
        eps: p.eps(),
        c: front.c,
        eta: front.eta,
        steady_residual: front.steady_residual,
        iterations: front.iterations,
        edge_fit: front.edge_fit,
        wake_bound_ok: kind != WaveKind::SecondaryCsc || check_wake_bound(&front, p.alpha()),
        min_sum: front.min_sum(),
        reduced_distance,
    };
    write_json(&out.join("tw.json"), &summary)?;
    write_manifest(out, "tw", cfg, started.elapsed().as_secs_f64())?;
    Ok(summary)
}

fn cfg_params(alpha: f64, eps: f64) -> Result<ModelParams> {
    ModelParams::new(alpha, eps).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub alpha: f64,
    pub eps: f64,
    pub eta: f64,
    pub dimension: usize,
    pub n_isolated: usize,
    pub max_re_isolated: Option<f64>,
    pub max_re_essential: Option<f64>,
    /// `(dx, σ_min / ‖K‖)` of `B` at λ = 0.
    pub probe: Vec<(f64, f64)>,
    /// `(η, rightmost Re λ)` of the periodic constant-state truncation
    /// about the invaded state.
    pub weight_sweep: Vec<(f64, f64)>,
}

/// Rightmost eigenvalue of the weighted constant-coefficient problem about
/// the invaded state for each weight in `0, η/n, …, η`.
pub fn weight_sweep(
    p: &ModelParams,
    front: &WaveProfile,
    grid: &SpectralGrid,
    steps: usize,
) -> Result<Vec<(f64, f64)>> {
    let (u, v) = (
        *front.u.last().expect("profile"),
        *front.v.last().expect("profile"),
    );
    let n = steps.max(1);
    (0..=n)
        .map(|i| {
            let eta = front.eta * i as f64 / n as f64;
            let pair =
                build_constant_linearization(u, v, p, front.c, eta, grid, Truncation::Periodic)?;
            let rep = compute_spectrum(&pair, usize::MAX)?;
            Ok((eta, rep.max_re()))
        })
        .collect()
}

pub fn spectrum(cfg: &ExperimentConfig, out: &Path) -> Result<SpectrumSummary> {
    let started = Instant::now();
    ensure_dir(out)?;
    let p = cfg.params()?;
    let front = solve_configured_front(cfg)?;
    let s = &cfg.spectrum;
    let grid =
        SpectralGrid::new(s.xi_min, s.xi_max, s.dx).map_err(|e| Error::Config(e.to_string()))?;
    let pair = build_weighted_linearization(&front, Some(&p), &grid)?;
    let report = compute_spectrum(&pair, s.dim_cap)?;
    report.write_csv(&out.join("spectrum.csv"))?;
    report.write_json(&out.join("spectrum.json"))?;
    let mut probe = Vec::new();
    for &dx in &s.probe_dx {
        let g =
            SpectralGrid::new(s.xi_min, s.xi_max, dx).map_err(|e| Error::Config(e.to_string()))?;
        let pair = build_weighted_linearization(&front, Some(&p), &g)?;
        probe.push((dx, resonance_probe(&pair, Complex64::new(0.0, 0.0))?));
    }
    let sweep_grid = SpectralGrid::new(0.0, 40.0, 0.2)?;
    let weight_sweep = weight_sweep(&p, &front, &sweep_grid, s.sweep_steps)?;
    let mut csv = String::from("eta,max_re\n");
    for (e, m) in &weight_sweep {
        csv.push_str(&format!("{e},{m}\n"));
    }
    let path = out.join("weight_sweep.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    let summary = SpectrumSummary {
        alpha: p.alpha(),
        eps: p.eps(),
        eta: front.eta,
        dimension: pair.dim(),
        n_isolated: report.isolated.len(),
        max_re_isolated: report.max_re_isolated,
        max_re_essential: report.max_re_essential,
        probe,
        weight_sweep,
    };
    write_json(&out.join("spectrum_summary.json"), &summary)?;
    write_manifest(out, "spectrum", cfg, started.elapsed().as_secs_f64())?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub regime: Regime,
    pub alphas: Vec<f64>,
    /// Earliest TC-front saturation over the family (staged only).
    pub earliest_pt_saturation: Option<f64>,
    /// Every interior ∂_α M is negative before that time.
    pub decreasing_before_saturation: Option<bool>,
    /// Longest τ-interval after it on which some ∂_α M stays positive.
    pub increasing_interval: Option<(f64, f64)>,
    pub max_abs_sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSummary {
    pub eps: f64,
    pub length: f64,
    pub x0: f64,
    pub families: Vec<FamilySummary>,
}

/// Runs one mass-experiment member per α, at most `jobs` at a time.
pub fn mass_sweep(cfg: &ExperimentConfig, alphas: &[f64], jobs: usize) -> Result<Vec<MassSeries>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    pool.install(|| {
        alphas
            .par_iter()
            .map(|&a| {
                let p = cfg.params_at(a)?;
                let run = run_scenario(cfg, &p, Scenario::MassExperiment, &[], true, None)?;
                MassSeries::from_run(&run, cfg.run.x0)
            })
            .collect()
    })
}

/// Sign structure of the empirical sensitivities of one regime family.
pub fn summarize_family(series: &[MassSeries], rows: &[SensitivityRow]) -> Result<FamilySummary> {
    let p0 = series[0].params()?;
    let regime = p0.regime();
    let alphas: Vec<f64> = series.iter().map(|s| s.alpha).collect();
    let max_abs_sensitivity = rows.iter().fold(0.0f64, |m, r| m.max(r.empirical.abs()));
    if regime != Regime::Staged {
        return Ok(FamilySummary {
            regime,
            alphas,
            earliest_pt_saturation: None,
            decreasing_before_saturation: None,
            increasing_interval: None,
            max_abs_sensitivity,
        });
    }
    let mut earliest = f64::INFINITY;
    for s in series {
        let w = paradox_window(&s.params()?, s.x0, s.length)?;
        earliest = earliest.min(w.tau_pt_saturation);
    }
    let decreasing = rows
        .iter()
        .filter(|r| r.tau < earliest)
        .all(|r| r.empirical < 0.0);
    let mut taus: Vec<f64> = rows
        .iter()
        .map(|r| r.tau)
        .filter(|t| *t >= earliest)
        .collect();
    taus.dedup();
    let positive = |t: f64| rows.iter().any(|r| r.tau == t && r.empirical > 0.0);
    let mut best: Option<(f64, f64)> = None;
    let mut start: Option<f64> = None;
    for (i, &t) in taus.iter().enumerate() {
        if positive(t) {
            let s = *start.get_or_insert(t);
            let end = t;
            let longer = best.is_none_or(|(a, b)| end - s > b - a);
            if longer && i > 0 && end > s {
                best = Some((s, end));
            }
        } else {
            start = None;
        }
    }
    Ok(FamilySummary {
        regime,
        alphas,
        earliest_pt_saturation: Some(earliest),
        decreasing_before_saturation: Some(decreasing),
        increasing_interval: best,
        max_abs_sensitivity,
    })
}

pub fn mass(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<MassSummary> {
    let started = Instant::now();
    ensure_dir(out)?;
    let mut alphas = cfg.analysis.alphas.clone();
    alphas.sort_by(f64::total_cmp);
    let series = mass_sweep(cfg, &alphas, jobs)?;
    for s in &series {
        s.write_csv(&out.join(format!("mass_alpha_{}.csv", s.alpha)))?;
    }
    let mut families = Vec::new();
    for regime in [Regime::Staged, Regime::TcExtinction] {
        let mut fam = Vec::new();
        for s in &series {
            if s.params()?.regime() == regime {
                fam.push(s.clone());
            }
        }
        if fam.len() < 3 {
            continue;
        }
        let rows = empirical_mass_sensitivity(&fam)?;
        let name = match regime {
            Regime::Staged => "staged",
            Regime::TcExtinction => "extinction",
        };
        write_sensitivity_csv(&rows, &out.join(format!("sensitivity_{name}.csv")))?;
        families.push(summarize_family(&fam, &rows)?);
    }
    let summary = MassSummary {
        eps: cfg.model.eps,
        length: cfg.grid.length,
        x0: cfg.run.x0,
        families,
    };
    write_json(&out.join("mass_summary.json"), &summary)?;
    write_manifest(out, "mass", cfg, started.elapsed().as_secs_f64())?;
    Ok(summary)
}
