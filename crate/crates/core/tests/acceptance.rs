//! End-to-end acceptance run: one line per criterion, non-zero exit if any
//! criterion fails.

use std::time::Instant;

use csc_invasion::config::ExperimentConfig;
use csc_invasion::dispersion::{
    essential_spectrum_curve, find_double_root, linear_spreading_speed, LinearState,
};
use csc_invasion::experiments::{
    mass_sweep, measure_speeds, run_scenario, summarize_family, weight_sweep,
};
use csc_invasion::mass::{approx_mass, empirical_mass_sensitivity, mass_sensitivity_app};
use csc_invasion::model::{kpp_condition, predicted_speeds, reaction_g, slow_manifold_v};
use csc_invasion::pde::Scenario;
use csc_invasion::spectrum::{
    build_weighted_linearization, compute_spectrum, resonance_probe, SpectralGrid, DEFAULT_DIM_CAP,
};
use csc_invasion::wave::{
    check_wake_bound, default_wave_grid, solve_full_front, solve_reduced_front, WaveKind,
};
use csc_invasion::{ModelParams, Regime};
use num_complex::Complex64;

type Outcome = Result<(bool, String), String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).expect("shipped config parses")
}

/// Fitted speeds of the scenario's natural fronts.
fn fitted(text: &str) -> Result<Vec<csc_invasion::experiments::SpeedRow>, String> {
    let cfg = config(text);
    let p = cfg.params().map_err(|e| e.to_string())?;
    let fronts = cfg.fronts(&p);
    let run = run_scenario(&cfg, &p, cfg.run.scenario, &fronts, false, None)
        .map_err(|e| e.to_string())?;
    measure_speeds(&cfg, &run, &fronts).map_err(|e| e.to_string())
}

const SECONDARY: &str = include_str!("../../../configs/speeds_secondary.toml");
const PRIMARY_TC: &str = include_str!("../../../configs/speeds_primary_tc.toml");
const PRIMARY_CSC: &str = include_str!("../../../configs/speeds_primary_csc.toml");
const MASS: &str = include_str!("../../../configs/mass_sweep.toml");

struct Speeds {
    sc: csc_invasion::experiments::SpeedRow,
    pt: csc_invasion::experiments::SpeedRow,
    pc: csc_invasion::experiments::SpeedRow,
    sc_seconds: f64,
}

fn speed_runs() -> Result<Speeds, String> {
    let t = Instant::now();
    let sc = fitted(SECONDARY)?.remove(0);
    let sc_seconds = t.elapsed().as_secs_f64();
    let pt = fitted(PRIMARY_TC)?.remove(0);
    let pc = fitted(PRIMARY_CSC)?.remove(0);
    Ok(Speeds {
        sc,
        pt,
        pc,
        sc_seconds,
    })
}

fn speed_line(r: &csc_invasion::experiments::SpeedRow) -> (bool, String) {
    (
        r.rel_err < 0.05,
        format!(
            "c = {:.5}, predicted {:.5}, rel err {:.4} (tol 0.05)",
            r.measured, r.predicted, r.rel_err
        ),
    )
}

fn criterion_1(s: &Speeds) -> Outcome {
    let (ok, msg) = speed_line(&s.sc);
    Ok((ok, format!("{msg}, run {:.1} s", s.sc_seconds)))
}

fn criterion_4(s: &Speeds) -> Outcome {
    let rows = [("pt", &s.pt), ("sc", &s.sc), ("pc", &s.pc)];
    let ok = rows.iter().all(|(_, r)| r.log_coeff_rel_err < 0.2);
    let msg = rows
        .iter()
        .map(|(n, r)| {
            format!(
                "{n}: {:.3} vs {:.3} ({:.3})",
                r.log_coeff_measured, r.log_coeff_predicted, r.log_coeff_rel_err
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok((ok, format!("{msg} (tol 0.2)")))
}

fn criterion_5() -> Outcome {
    let staged = config(
        "[model]\nalpha = 0.85\neps = 0.1\n[run]\nscenario = \"mass_experiment\"\nt_end = 100.0\n",
    );
    let p = staged.params().map_err(|e| e.to_string())?;
    let fronts = staged.fronts(&p);
    let run = run_scenario(&staged, &p, Scenario::MassExperiment, &fronts, false, None)
        .map_err(|e| e.to_string())?;
    let rows = measure_speeds(&staged, &run, &fronts).map_err(|e| e.to_string())?;
    let (c_pt, c_sc) = (rows[0].measured, rows[1].measured);
    let gap = (c_pt - c_sc).abs() / c_sc;
    let staged_seen = gap > 0.1;

    // at 0.95 follow both species; a single front means they move together
    let ext = config(
        "[model]\nalpha = 0.95\neps = 0.1\n[run]\nscenario = \"mass_experiment\"\nt_end = 140.0\n\
         [[analysis.fronts]]\nkind = \"pc\"\ncomponent = \"u\"\nlevel = 0.5\n\
         [[analysis.fronts]]\nkind = \"pc\"\ncomponent = \"v\"\nlevel = 0.025\n",
    );
    let q = ext.params().map_err(|e| e.to_string())?;
    let fronts = ext.fronts(&q);
    let run = run_scenario(&ext, &q, Scenario::MassExperiment, &fronts, false, None)
        .map_err(|e| e.to_string())?;
    let rows = measure_speeds(&ext, &run, &fronts).map_err(|e| e.to_string())?;
    let (c_u, c_v) = (rows[0].measured, rows[1].measured);
    let single = (c_u - c_v).abs() / c_u <= 0.1;
    let near_two = (c_u - 2.0).abs() / 2.0 < 0.05;
    let classes_match = staged_seen == (p.regime() == Regime::Staged)
        && single == (q.regime() == Regime::TcExtinction);
    Ok((
        staged_seen && single && near_two && classes_match,
        format!(
            "α=0.85: c_pt {c_pt:.4}, c_sc {c_sc:.4} (gap {gap:.3} > 0.1); α=0.95: c_u {c_u:.4}, c_v {c_v:.4}, |c−2|/2 = {:.4} (tol 0.05)",
            (c_u - 2.0).abs() / 2.0
        ),
    ))
}

fn criterion_6() -> Outcome {
    let p = ModelParams::new(0.75, 0.1).map_err(|e| e.to_string())?;
    let eta = 0.75f64.sqrt();
    let root = find_double_root(
        LinearState::PureTc,
        3f64.sqrt(),
        &p,
        (Complex64::new(0.05, 0.0), Complex64::new(-0.8, 0.0)),
    )
    .map_err(|e| e.to_string())?;
    let speed = linear_spreading_speed(LinearState::PureTc, &p).map_err(|e| e.to_string())?;
    let (d10, d02) = root.expansion;
    let dc = (speed.c_star - 2.0 * eta).abs();
    let ok = root.lambda.norm() < 1e-10
        && (root.nu + eta).norm() < 1e-8
        && d10.re > 0.0
        && d02.re < 0.0
        && root.pinched
        && dc < 1e-8;
    Ok((
        ok,
        format!(
            "|λ| = {:.1e}, |ν+√α| = {:.1e}, d10 = {:.3}, d02 = {:.3}, pinched = {}, |c*−2√α| = {dc:.1e}",
            root.lambda.norm(),
            (root.nu + eta).norm(),
            d10.re,
            d02.re,
            root.pinched
        ),
    ))
}

fn criterion_7() -> Outcome {
    let p = ModelParams::new(0.75, 0.1).map_err(|e| e.to_string())?;
    let pred = predicted_speeds(&p);
    let curve =
        essential_spectrum_curve(LinearState::PureTc, pred.eta_sc, pred.c_sc, &p, 10.0, 2001)
            .map_err(|e| e.to_string())?;
    let branch_err = curve
        .k_samples
        .iter()
        .enumerate()
        .map(|(i, k)| {
            curve
                .lambda_branches
                .iter()
                .map(|b| (b[i] - Complex64::new(-k * k, 0.0)).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let ok = curve.max_re.abs() <= 1e-12
        && curve.argmax_k == 0.0
        && curve.touches_only_at_origin
        && branch_err <= 1e-12;
    Ok((
        ok,
        format!(
            "max Re λ = {:.1e} at k = {}, touches only at 0: {}, max |λ + k²| = {branch_err:.1e}",
            curve.max_re, curve.argmax_k, curve.touches_only_at_origin
        ),
    ))
}

fn criterion_8() -> Outcome {
    let mut worst = 0.0f64;
    for alpha in [0.25, 0.5, 0.75, 1.25, 1.5] {
        let p = ModelParams::new(alpha, 0.1).map_err(|e| e.to_string())?;
        for i in 0..1000 {
            let u = i as f64 / 999.0;
            let v = slow_manifold_v(u, alpha).map_err(|e| e.to_string())?;
            worst = worst.max(reaction_g(u, v, &p, true).abs());
        }
    }
    let mut kpp_ok = true;
    let mut kpp_violation = f64::NEG_INFINITY;
    for alpha in [0.25, 0.5, 0.75] {
        let r = kpp_condition(alpha, 1000, 1e-10).map_err(|e| e.to_string())?;
        kpp_ok &= r.standard_holds;
        kpp_violation = kpp_violation.max(r.max_violation);
    }
    Ok((
        worst < 1e-12 && kpp_ok,
        format!("max |g(u, v_α(u))| = {worst:.1e}; KPP max(f̃ − f̃′(0)u) = {kpp_violation:.1e}"),
    ))
}

fn criterion_9() -> Outcome {
    let grid = default_wave_grid();
    let reduced = solve_reduced_front(0.75, &grid).map_err(|e| e.to_string())?;
    let mut distances = Vec::new();
    let mut first = None;
    for eps in [0.04, 0.01, 0.0025] {
        let p = ModelParams::new(0.75, eps).map_err(|e| e.to_string())?;
        let f = solve_full_front(&p, WaveKind::SecondaryCsc, &grid).map_err(|e| e.to_string())?;
        distances.push(f.distance_to(&reduced).map_err(|e| e.to_string())?);
        first.get_or_insert(f);
    }
    let f = first.expect("three fronts");
    let rms = f.edge_fit.map(|e| e.rms).unwrap_or(f64::INFINITY);
    let wake = check_wake_bound(&f, 0.75);
    let decreasing = distances.windows(2).all(|w| w[1] < w[0]);
    Ok((
        f.steady_residual < 1e-4 && wake && rms < 0.05 && decreasing,
        format!(
            "residual {:.1e}, min(u+v) = {:.3} > {:.4}, edge rms {rms:.4}, distances {:?}",
            f.steady_residual,
            f.min_sum(),
            3.0 * 0.25 / 4.0,
            distances
                .iter()
                .map(|d| format!("{d:.2e}"))
                .collect::<Vec<_>>()
        ),
    ))
}

fn criterion_10() -> Outcome {
    let p = ModelParams::new(0.75, 0.04).map_err(|e| e.to_string())?;
    let front = solve_full_front(&p, WaveKind::SecondaryCsc, &default_wave_grid())
        .map_err(|e| e.to_string())?;
    let grid = SpectralGrid::new(-10.0, 50.0, 0.1).map_err(|e| e.to_string())?;
    let pair = build_weighted_linearization(&front, Some(&p), &grid).map_err(|e| e.to_string())?;
    let report = compute_spectrum(&pair, DEFAULT_DIM_CAP).map_err(|e| e.to_string())?;
    let no_unstable = report.max_re_isolated.is_none_or(|m| m < 1e-3);
    let mut probes = Vec::new();
    for dx in [0.1, 0.05, 0.025] {
        let g = SpectralGrid::new(-10.0, 50.0, dx).map_err(|e| e.to_string())?;
        let pair = build_weighted_linearization(&front, Some(&p), &g).map_err(|e| e.to_string())?;
        probes.push(resonance_probe(&pair, Complex64::new(0.0, 0.0)).map_err(|e| e.to_string())?);
    }
    let non_vanishing =
        probes.iter().all(|s| *s > 0.0) && probes.windows(2).all(|w| w[1] > 0.5 * w[0]);
    let sweep = weight_sweep(
        &p,
        &front,
        &SpectralGrid::new(0.0, 40.0, 0.2).map_err(|e| e.to_string())?,
        5,
    )
    .map_err(|e| e.to_string())?;
    let (start, end) = (sweep[0].1, sweep.last().expect("sweep").1);
    let moves = (start - 0.75).abs() < 0.01 && end.abs() < 0.01;
    Ok((
        no_unstable && non_vanishing && moves,
        format!(
            "isolated: {} (max Re {:?}), probe at λ=0 {:?}, abscissa {start:.4} → {end:.1e}",
            report.isolated.len(),
            report.max_re_isolated,
            probes
                .iter()
                .map(|s| format!("{s:.2e}"))
                .collect::<Vec<_>>()
        ),
    ))
}

fn criterion_11() -> Outcome {
    let (x0, l) = (10.0, 300.0);
    // deterministic low-discrepancy points in the staged regime
    let frac = |x: f64| x - x.floor();
    let mut worst = 0.0f64;
    let mut identity = 0.0f64;
    let mut n = 0;
    let mut i = 0u32;
    while n < 100 {
        i += 1;
        let eps = 0.02 + 0.4 * frac(i as f64 * 0.754_877_666_246_692_7);
        let a_max = 1.0 / (1.0 + eps);
        let alpha = 0.05 + (a_max - 0.1) * frac(i as f64 * 0.569_840_290_998_053_3);
        let tau = 200.0 * frac(i as f64 * 0.618_033_988_749_894_8);
        let p = ModelParams::new(alpha, eps).map_err(|e| e.to_string())?;
        let h = 1e-6 * alpha;
        let m = |a: f64| approx_mass(tau, &ModelParams::new(a, eps).unwrap(), x0, l).unwrap();
        let fd = (m(alpha + h) - m(alpha - h)) / (2.0 * h);
        let app = mass_sensitivity_app(tau, &p, x0, l).map_err(|e| e.to_string())?;
        let c_pt = predicted_speeds(&p).c_pt.expect("staged");
        let gap = l - x0;
        // skip points within one difference step of a breakpoint
        let dc = 1e-3 * tau;
        if (tau * c_pt - gap).abs() < dc || (3.0 * alpha.sqrt() * tau - gap).abs() < dc {
            continue;
        }
        n += 1;
        worst = worst.max((fd - app).abs() / app.abs().max(1.0));
        if tau * c_pt < gap {
            let closed = 3.0 * tau * (alpha.sqrt() - ((1.0 - alpha) / eps).sqrt());
            identity = identity.max((app - closed).abs() / closed.abs().max(1.0));
        }
    }
    Ok((
        worst < 1e-6 && identity < 1e-13,
        format!("max rel |FD − analytic| = {worst:.1e} over 100 points; closed-form mismatch {identity:.1e}"),
    ))
}

fn criterion_12() -> Outcome {
    let t = Instant::now();
    let cfg = config(MASS);
    let series = mass_sweep(&cfg, &cfg.analysis.alphas, 1).map_err(|e| e.to_string())?;
    let (staged, ext): (Vec<_>, Vec<_>) = series.into_iter().partition(|s| s.alpha < 1.0);
    let staged_sum = summarize_family(
        &staged,
        &empirical_mass_sensitivity(&staged).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let ext_sum = summarize_family(
        &ext,
        &empirical_mass_sensitivity(&ext).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let ok = staged_sum.decreasing_before_saturation == Some(true)
        && staged_sum.increasing_interval.is_some()
        && ext_sum.max_abs_sensitivity < 0.05 * cfg.grid.length;
    Ok((
        ok,
        format!(
            "∂αM < 0 before τ = {:.1}: {:?}; ∂αM > 0 on {:?}; extinction max |∂αM| = {:.3} (< {}); sweep {:.0} s",
            staged_sum.earliest_pt_saturation.unwrap_or(f64::NAN),
            staged_sum.decreasing_before_saturation,
            staged_sum.increasing_interval,
            ext_sum.max_abs_sensitivity,
            0.05 * cfg.grid.length,
            t.elapsed().as_secs_f64()
        ),
    ))
}

fn main() {
    // the harness-free target still honours `cargo test -- --list`
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let speeds = speed_runs();
    let from_speeds = |f: fn(&Speeds) -> Outcome| match &speeds {
        Ok(s) => f(s),
        Err(e) => Err(e.clone()),
    };
    let criteria: Vec<(&str, Check)> = vec![
        ("secondary CSC speed", Box::new(|| from_speeds(criterion_1))),
        (
            "primary TC speed",
            Box::new(|| from_speeds(|s| Ok(speed_line(&s.pt)))),
        ),
        (
            "primary CSC speed",
            Box::new(|| from_speeds(|s| Ok(speed_line(&s.pc)))),
        ),
        (
            "logarithmic delay coefficients",
            Box::new(|| from_speeds(criterion_4)),
        ),
        ("regime boundary", Box::new(criterion_5)),
        ("double-root certificate", Box::new(criterion_6)),
        ("essential-spectrum curve", Box::new(criterion_7)),
        ("slow manifold and KPP condition", Box::new(criterion_8)),
        ("front profile", Box::new(criterion_9)),
        ("weighted spectral stability", Box::new(criterion_10)),
        ("mass identities", Box::new(criterion_11)),
        ("mass paradox", Box::new(criterion_12)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} [{}] {name}: {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
