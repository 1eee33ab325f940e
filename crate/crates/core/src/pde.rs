//! Time integration of the rescaled system on a bounded interval.
//!
//! The `v` equation is advanced in its `eps`-divided form
//! `v_t = v_xx + g(u, v) / eps`, so both components share one diffusion
//! matrix. The default scheme is a Strang splitting: half a reaction step
//! (Heun), a Crank-Nicolson diffusion step, half a reaction step.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::front::{crossing_position, Component};
use crate::linalg::Tridiagonal;
use crate::mass::total_mass;
use crate::model::{reaction_f, reaction_g, ModelParams};

/// Undershoot below this value aborts a run.
pub const NEGATIVE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftBoundary {
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RightBoundary {
    /// Both components pinned (to zero for the PDE, to the far-field state for fronts).
    Dirichlet0,
    Neumann,
}

/// Uniform grid on `[origin, origin + length]`, Neumann on the left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    origin: f64,
    length: f64,
    n_points: usize,
    bc_right: RightBoundary,
}

impl Grid1D {
    pub fn new(length: f64, n_points: usize, bc_right: RightBoundary) -> Result<Self> {
        Self::with_origin(0.0, length, n_points, bc_right)
    }

    pub fn with_origin(
        origin: f64,
        length: f64,
        n_points: usize,
        bc_right: RightBoundary,
    ) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid length must be positive, got {length}"
            )));
        }
        if n_points < 3 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 3 points, got {n_points}"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidParameter("grid origin must be finite".into()));
        }
        Ok(Self {
            origin,
            length,
            n_points,
            bc_right,
        })
    }

    /// Grid on `[left, right]` with spacing as close to `dx` as divides the interval.
    pub fn spanning(left: f64, right: f64, dx: f64, bc_right: RightBoundary) -> Result<Self> {
        if !(dx > 0.0) || !(right > left) {
            return Err(Error::InvalidParameter(format!(
                "bad interval [{left}, {right}] with dx = {dx}"
            )));
        }
        let cells = ((right - left) / dx).round().max(2.0) as usize;
        Self::with_origin(left, right - left, cells + 1, bc_right)
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn end(&self) -> f64 {
        self.origin + self.length
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> f64 {
        self.length / (self.n_points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    pub fn bc_left(&self) -> LeftBoundary {
        LeftBoundary::Neumann
    }

    pub fn bc_right(&self) -> RightBoundary {
        self.bc_right
    }

    /// Index of the grid point nearest `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let i = ((x - self.origin) / self.dx()).round();
        i.clamp(0.0, (self.n_points - 1) as f64) as usize
    }
}

/// Paired profiles `(u, v)` at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateField {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub time: f64,
}

impl StateField {
    pub fn uniform(n: usize, u: f64, v: f64) -> Self {
        Self {
            u: vec![u; n],
            v: vec![v; n],
            time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn max_abs(&self) -> (f64, f64) {
        let m = |x: &[f64]| x.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        (m(&self.u), m(&self.v))
    }

    /// Writes `x,u,v` rows.
    pub fn write_csv(&self, grid: &Grid1D, path: &Path) -> Result<()> {
        let mut out = String::from("x,u,v\n");
        for i in 0..self.len() {
            out.push_str(&format!("{},{},{}\n", grid.x(i), self.u[i], self.v[i]));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImexCn,
    ExplicitRk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub dt: f64,
    pub scheme: Scheme,
    pub safety: f64,
}

impl StepControl {
    /// The largest admissible step for `scheme` at the given safety factor.
    pub fn stable(grid: &Grid1D, p: &ModelParams, scheme: Scheme, safety: f64) -> Result<Self> {
        let ctl = Self {
            dt: safety * max_stable_dt(grid, p, scheme),
            scheme,
            safety,
        };
        ctl.validate(grid, p)?;
        Ok(ctl)
    }

    pub fn validate(&self, grid: &Grid1D, p: &ModelParams) -> Result<()> {
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "safety must lie in (0, 1], got {}",
                self.safety
            )));
        }
        let bound = self.safety * max_stable_dt(grid, p, self.scheme);
        if !(self.dt > 0.0) || self.dt > bound * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds the {:?} bound {bound:.4e}",
                self.dt, self.scheme
            )));
        }
        Ok(())
    }
}

/// Coarse Lipschitz bound of the reaction over `[-0.1, 1.5]^2`.
pub fn reaction_bound(p: &ModelParams) -> f64 {
    4.0 * (1.0 + p.alpha() + 1.0 / p.eps())
}

pub fn max_stable_dt(grid: &Grid1D, p: &ModelParams, scheme: Scheme) -> f64 {
    let reaction = p.eps() / reaction_bound(p);
    match scheme {
        Scheme::ImexCn => reaction,
        Scheme::ExplicitRk4 => {
            let dx2 = grid.dx().powi(2);
            (0.5 * dx2).min(0.5 * dx2 * p.eps()).min(reaction)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// `u = 0`, TC plateau on `[0, x0]`: invasion of the cancer-free state by TCs.
    PrimaryTc,
    /// CSCs on `[0, x0]` invading the pure TC state.
    SecondaryCsc,
    /// Both species on `[0, x0]` invading the cancer-free state.
    PrimaryCsc,
    /// Same step data as `PrimaryCsc`, used for total-mass runs.
    MassExperiment,
}

pub fn initial_step_data(
    grid: &Grid1D,
    x0: f64,
    p: &ModelParams,
    scenario: Scenario,
) -> Result<StateField> {
    if !(x0 > grid.origin() && x0 < grid.end()) {
        return Err(Error::InvalidParameter(format!(
            "x0 = {x0} must lie inside ({}, {})",
            grid.origin(),
            grid.end()
        )));
    }
    let tc = (1.0 - p.alpha()).max(0.0);
    let (left, right) = match scenario {
        Scenario::PrimaryTc => ((0.0, tc), (0.0, 0.0)),
        Scenario::SecondaryCsc => ((1.0, 0.0), (0.0, tc)),
        Scenario::PrimaryCsc | Scenario::MassExperiment => ((1.0, tc), (0.0, 0.0)),
    };
    let n = grid.n_points();
    let mut s = StateField::uniform(n, 0.0, 0.0);
    for i in 0..n {
        let (u, v) = if grid.x(i) <= x0 { left } else { right };
        s.u[i] = u;
        s.v[i] = v;
    }
    if grid.bc_right() == RightBoundary::Dirichlet0 {
        s.u[n - 1] = 0.0;
        s.v[n - 1] = 0.0;
    }
    Ok(s)
}

/// Advances states with a fixed step, caching the diffusion factorisation.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid1D,
    params: ModelParams,
    dt: f64,
    scheme: Scheme,
    cn: Option<CrankNicolson>,
}

#[derive(Debug, Clone)]
struct CrankNicolson {
    implicit: Tridiagonal,
    half_r: f64,
}

impl Stepper {
    pub fn new(grid: &Grid1D, p: &ModelParams, ctl: &StepControl) -> Result<Self> {
        ctl.validate(grid, p)?;
        Self::unchecked(grid, p, ctl.dt, ctl.scheme)
    }

    fn unchecked(grid: &Grid1D, p: &ModelParams, dt: f64, scheme: Scheme) -> Result<Self> {
        let cn = match scheme {
            Scheme::ImexCn => Some(CrankNicolson::new(grid, dt)?),
            Scheme::ExplicitRk4 => None,
        };
        Ok(Self {
            grid: *grid,
            params: *p,
            dt,
            scheme,
            cn,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn advance(&self, s: &mut StateField) -> Result<()> {
        match self.scheme {
            Scheme::ImexCn => {
                let cn = self.cn.as_ref().expect("factorised for ImexCn");
                reaction_heun(s, 0.5 * self.dt, &self.params);
                cn.apply(&self.grid, &mut s.u);
                cn.apply(&self.grid, &mut s.v);
                reaction_heun(s, 0.5 * self.dt, &self.params);
            }
            Scheme::ExplicitRk4 => rk4_step(s, self.dt, &self.grid, &self.params),
        }
        if self.grid.bc_right() == RightBoundary::Dirichlet0 {
            let n = s.len();
            s.u[n - 1] = 0.0;
            s.v[n - 1] = 0.0;
        }
        s.time += self.dt;
        check_state(s)
    }
}

impl CrankNicolson {
    fn new(grid: &Grid1D, dt: f64) -> Result<Self> {
        let n = grid.n_points();
        let r = dt / grid.dx().powi(2);
        let half_r = 0.5 * r;
        let mut lower = vec![-half_r; n];
        let mut diag = vec![1.0 + r; n];
        let mut upper = vec![-half_r; n];
        lower[0] = 0.0;
        upper[0] = -r;
        upper[n - 1] = 0.0;
        match grid.bc_right() {
            RightBoundary::Neumann => lower[n - 1] = -r,
            RightBoundary::Dirichlet0 => {
                lower[n - 1] = 0.0;
                diag[n - 1] = 1.0;
            }
        }
        Ok(Self {
            implicit: Tridiagonal::factor(&lower, &diag, &upper)?,
            half_r,
        })
    }

    fn apply(&self, grid: &Grid1D, x: &mut [f64]) {
        let n = x.len();
        let h = self.half_r;
        let mut rhs = vec![0.0; n];
        rhs[0] = x[0] + 2.0 * h * (x[1] - x[0]);
        for i in 1..n - 1 {
            rhs[i] = x[i] + h * (x[i - 1] - 2.0 * x[i] + x[i + 1]);
        }
        rhs[n - 1] = match grid.bc_right() {
            RightBoundary::Neumann => x[n - 1] + 2.0 * h * (x[n - 2] - x[n - 1]),
            RightBoundary::Dirichlet0 => 0.0,
        };
        self.implicit.solve_in_place(&mut rhs);
        x.copy_from_slice(&rhs);
    }
}

#[inline]
fn rates(u: f64, v: f64, p: &ModelParams) -> (f64, f64) {
    (reaction_f(u, v), reaction_g(u, v, p, false) / p.eps())
}

fn reaction_heun(s: &mut StateField, h: f64, p: &ModelParams) {
    for (u, v) in s.u.iter_mut().zip(s.v.iter_mut()) {
        let (a1, b1) = rates(*u, *v, p);
        let (a2, b2) = rates(*u + h * a1, *v + h * b1, p);
        *u += 0.5 * h * (a1 + a2);
        *v += 0.5 * h * (b1 + b2);
    }
}

fn laplacian(x: &[f64], grid: &Grid1D, out: &mut [f64]) {
    let n = x.len();
    let inv = 1.0 / grid.dx().powi(2);
    out[0] = 2.0 * (x[1] - x[0]) * inv;
    for i in 1..n - 1 {
        out[i] = (x[i - 1] - 2.0 * x[i] + x[i + 1]) * inv;
    }
    out[n - 1] = match grid.bc_right() {
        RightBoundary::Neumann => 2.0 * (x[n - 2] - x[n - 1]) * inv,
        RightBoundary::Dirichlet0 => 0.0,
    };
}

fn full_rhs(s: &StateField, grid: &Grid1D, p: &ModelParams, du: &mut [f64], dv: &mut [f64]) {
    laplacian(&s.u, grid, du);
    laplacian(&s.v, grid, dv);
    let n = s.len();
    let pinned = grid.bc_right() == RightBoundary::Dirichlet0;
    for i in 0..n {
        if pinned && i == n - 1 {
            du[i] = 0.0;
            dv[i] = 0.0;
            continue;
        }
        let (a, b) = rates(s.u[i], s.v[i], p);
        du[i] += a;
        dv[i] += b;
    }
}

fn rk4_step(s: &mut StateField, dt: f64, grid: &Grid1D, p: &ModelParams) {
    let n = s.len();
    let mut k = [(); 4].map(|_| (vec![0.0; n], vec![0.0; n]));
    let mut stage = s.clone();
    let offsets = [0.0, 0.5, 0.5, 1.0];
    for j in 0..4 {
        if j > 0 {
            for i in 0..n {
                stage.u[i] = s.u[i] + offsets[j] * dt * k[j - 1].0[i];
                stage.v[i] = s.v[i] + offsets[j] * dt * k[j - 1].1[i];
            }
        }
        let (du, dv) = &mut k[j];
        full_rhs(&stage, grid, p, du, dv);
    }
    for i in 0..n {
        s.u[i] += dt / 6.0 * (k[0].0[i] + 2.0 * k[1].0[i] + 2.0 * k[2].0[i] + k[3].0[i]);
        s.v[i] += dt / 6.0 * (k[0].1[i] + 2.0 * k[1].1[i] + 2.0 * k[2].1[i] + k[3].1[i]);
    }
}

fn check_state(s: &StateField) -> Result<()> {
    let mut min = f64::INFINITY;
    let mut finite = true;
    for &x in s.u.iter().chain(s.v.iter()) {
        finite &= x.is_finite();
        min = min.min(x);
    }
    if finite && min >= -NEGATIVE_TOLERANCE {
        return Ok(());
    }
    let (max_u, max_v) = s.max_abs();
    Err(Error::Integration {
        time: s.time,
        max_u,
        max_v,
        reason: if finite {
            format!("undershoot to {min:.3e}")
        } else {
            "non-finite value".into()
        },
    })
}

/// One step of size `ctl.dt`.
pub fn step(
    s: &StateField,
    ctl: &StepControl,
    grid: &Grid1D,
    p: &ModelParams,
) -> Result<StateField> {
    let mut next = s.clone();
    Stepper::new(grid, p, ctl)?.advance(&mut next)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontProbe {
    pub component: Component,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPlan {
    pub dir: PathBuf,
    pub times: Vec<f64>,
}

/// What to record during a run, and how often.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observers {
    pub cadence: f64,
    pub probes: Vec<FrontProbe>,
    pub record_mass: bool,
    pub snapshots: Option<SnapshotPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    /// One entry per probe, `None` when the level is not crossed.
    pub positions: Vec<Option<f64>>,
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub params: ModelParams,
    pub grid: Grid1D,
    pub dt: f64,
    pub steps: usize,
    pub wall_time_s: f64,
    pub final_state: StateField,
    pub probes: Vec<FrontProbe>,
    pub samples: Vec<Sample>,
    pub snapshot_files: Vec<PathBuf>,
}

fn observe(s: &StateField, grid: &Grid1D, obs: &Observers) -> Sample {
    Sample {
        time: s.time,
        positions: obs
            .probes
            .iter()
            .map(|pr| crossing_position(s, grid, pr.component, pr.level))
            .collect(),
        mass: obs.record_mass.then(|| total_mass(s, grid)),
    }
}

fn snapshot_name(t: f64) -> String {
    format!("snap_t{t}.csv")
}

/// Integrates from `initial` up to `t_end`.
///
/// The step is shrunk so that a whole number of steps lands on `t_end` and,
/// when the cadence divides `t_end`, on every multiple of the cadence.
/// Samples are taken at `t = 0` and then whenever a multiple of the cadence
/// is passed.
pub fn integrate(
    p: &ModelParams,
    grid: &Grid1D,
    ctl: &StepControl,
    initial: StateField,
    t_end: f64,
    obs: &Observers,
) -> Result<RunRecord> {
    let started = Instant::now();
    if !(t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "t_end must be >= 0, got {t_end}"
        )));
    }
    if initial.len() != grid.n_points() || initial.v.len() != grid.n_points() {
        return Err(Error::InvalidParameter(
            "initial state does not match grid".into(),
        ));
    }
    ctl.validate(grid, p)?;
    let t0 = initial.time;
    let mut state = initial;
    let mut record = RunRecord {
        params: *p,
        grid: *grid,
        dt: ctl.dt,
        steps: 0,
        wall_time_s: 0.0,
        final_state: state.clone(),
        probes: obs.probes.clone(),
        samples: Vec::new(),
        snapshot_files: Vec::new(),
    };
    if t_end == 0.0 {
        record.wall_time_s = started.elapsed().as_secs_f64();
        return Ok(record);
    }

    // the step divides the sampling cadence when the cadence divides t_end,
    // so every member of a sweep samples at the same times
    let cadence = if obs.cadence > 0.0 {
        obs.cadence
    } else {
        f64::INFINITY
    };
    let periods = t_end / cadence;
    let base = if periods >= 1.0 && (periods - periods.round()).abs() < 1e-9 {
        cadence
    } else {
        t_end
    };
    let per_base = (base / ctl.dt - 1e-9).ceil().max(1.0);
    let dt = base / per_base;
    let n_steps = (t_end / dt).round().max(1.0) as usize;
    let stepper = Stepper::unchecked(grid, p, dt, ctl.scheme)?;
    record.dt = dt;

    let mut next_sample = t0;
    let mut pending_snaps: Vec<f64> = obs
        .snapshots
        .as_ref()
        .map(|plan| plan.times.clone())
        .unwrap_or_default();
    pending_snaps.sort_by(f64::total_cmp);
    if let Some(plan) = &obs.snapshots {
        fs::create_dir_all(&plan.dir).map_err(|e| Error::io(&plan.dir, e))?;
    }

    let mut emit = |state: &StateField, record: &mut RunRecord, last: bool| -> Result<()> {
        let elapsed = state.time - t0;
        if elapsed >= next_sample - t0 - 1e-9 * dt {
            record.samples.push(observe(state, grid, obs));
            while next_sample - t0 <= elapsed + 1e-9 * dt {
                next_sample += cadence;
            }
        }
        while let Some(&ts) = pending_snaps.first() {
            if elapsed + 0.5 * dt < ts && !last {
                break;
            }
            let plan = obs.snapshots.as_ref().expect("snapshot plan");
            let path = plan.dir.join(snapshot_name(ts));
            state.write_csv(grid, &path)?;
            record.snapshot_files.push(path);
            pending_snaps.remove(0);
        }
        Ok(())
    };

    emit(&state, &mut record, false)?;
    for k in 0..n_steps {
        stepper.advance(&mut state)?;
        // re-derive time from the step count to avoid drift
        state.time = t0 + (k + 1) as f64 * dt;
        record.steps += 1;
        emit(&state, &mut record, k + 1 == n_steps)?;
    }
    record.final_state = state;
    record.wall_time_s = started.elapsed().as_secs_f64();
    Ok(record)
}

/// Writes one snapshot file per requested time into `dir` for an existing state.
pub fn write_snapshot(state: &StateField, grid: &Grid1D, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(snapshot_name(state.time));
    state.write_csv(grid, &path)?;
    let _ = fs::File::open(&path).and_then(|mut f| f.flush());
    Ok(path)
}
