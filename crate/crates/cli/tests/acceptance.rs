//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p spm-cli --test acceptance`; pass criterion numbers
//! (e.g. `-- 3 7`) to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spm_core::det::{comparison_check, det_solve, first_entrance_time, fixed_point};
use spm_core::ergodics::{
    accessibility, contraction_suite, e_property_probe, empirical_invariant, energy_scaling,
    lower_bound, occupation_average, product_chain, random_field, random_ordered_pairs,
    random_pairs, CappedDistance, ErgodicsReport, LipschitzFunctional, NoiseSharing,
    OccupationSpec,
};
use spm_core::monotone::phi;
use spm_core::{Field, Grid, NoiseModel, SolverConfig, YosidaParams};

type Outcome = Result<String, String>;

struct Ctx {
    workers: usize,
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn(&Ctx) -> Outcome,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn info(line: impl AsRef<str>) {
    println!("      info: {}", line.as_ref());
}

fn default_setup(n: usize) -> (Grid, NoiseModel, SolverConfig) {
    let grid = Grid::new(n).unwrap();
    let model = NoiseModel::default_model(&grid, 4, 1.0, 2.0).unwrap();
    let cfg = SolverConfig::new(0.05, 1e-3, 1.0)
        .with_seed(2024)
        .with_save_every(10);
    (grid, model, cfg)
}

// 1 -------------------------------------------------------------------------

/// Closed-form resolvent and Yosida value for `x ↦ x·1{|x|>1}`, written
/// independently of the library.
fn yosida_oracle(eps: f64, x: f64) -> (f64, f64) {
    let a = x.abs();
    let s = x.signum();
    if a <= 1.0 {
        (x, 0.0)
    } else if a <= 1.0 + eps {
        (s, s * (a - 1.0) / eps)
    } else {
        (x / (1.0 + eps), x / (1.0 + eps))
    }
}

fn c1_yosida(_: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let (mut worst_formula, mut worst_resolvent, mut worst_graph) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut bound_checked = 0;
    let mut bound_failures = 0;
    for _ in 0..n {
        let eps = 1.0 - rng.random::<f64>();
        let x = rng.random_range(-10.0..=10.0);
        let p = YosidaParams::new(eps).map_err(|e| e.to_string())?;
        let (j, y) = (p.resolvent(x), p.yosida(x));
        let (j_ref, y_ref) = yosida_oracle(eps, x);
        worst_formula = worst_formula.max((y - y_ref).abs()).max((j - j_ref).abs());
        worst_resolvent = worst_resolvent.max((j + eps * y - x).abs());
        worst_graph = worst_graph.max(phi(j).distance(y));
        if x.abs() >= 1.0 + eps {
            bound_checked += 1;
            if y.abs() < x.abs() / 2.0 {
                bound_failures += 1;
            }
        }
    }
    check(
        worst_formula <= 1e-12
            && worst_resolvent <= 1e-12
            && worst_graph <= 1e-12
            && bound_failures == 0,
        format!(
            "{n} samples: formula err {worst_formula:.1e}, resolvent err {worst_resolvent:.1e}, \
             graph err {worst_graph:.1e}, growth bound failures {bound_failures}/{bound_checked}"
        ),
    )
}

// 2 -------------------------------------------------------------------------

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Sup error of the piecewise-linear reconstruction of nodal values
/// (zero at the walls) against `exact`, sampled inside every cell.
fn reconstruction_error(u: &Field, exact: impl Fn(f64) -> f64) -> f64 {
    let grid = u.grid();
    let h = grid.h();
    let mut padded = vec![0.0];
    padded.extend_from_slice(u.values());
    padded.push(0.0);
    let mut worst = 0.0_f64;
    for i in 0..padded.len() - 1 {
        let left = -1.0 + i as f64 * h;
        for k in 0..=16 {
            let s = k as f64 / 16.0;
            let v = (1.0 - s) * padded[i] + s * padded[i + 1];
            worst = worst.max((v - exact(left + s * h)).abs());
        }
    }
    worst
}

fn c2_discrete_calculus(_: &Ctx) -> Outcome {
    use std::f64::consts::PI;
    let mut worst_sbp = 0.0_f64;
    let mut worst_solve = 0.0_f64;
    let mut parabola = Vec::new();
    let mut cosine = Vec::new();
    let mut nodal_parabola = Vec::new();
    for (k, n) in [63, 127, 255].into_iter().enumerate() {
        let grid = Grid::new(n).unwrap();
        let h = grid.h();
        let u = random_field(&grid, 3.0, 10 + k as u64);
        let v = random_field(&grid, 2.0, 20 + k as u64);
        let (lu, lv) = (u.laplacian(), v.laplacian());
        // symmetry of the discrete Laplacian
        worst_sbp = worst_sbp.max(rel(u.inner_l2(&lv).unwrap(), v.inner_l2(&lu).unwrap()));
        // -<u, Δu> = h Σ (D⁺u)² with zero boundary values
        let mut padded = vec![0.0];
        padded.extend_from_slice(u.values());
        padded.push(0.0);
        let dirichlet: f64 = padded
            .windows(2)
            .map(|w| ((w[1] - w[0]) / h).powi(2))
            .sum::<f64>()
            * h;
        worst_sbp = worst_sbp.max(rel(-u.inner_l2(&lu).unwrap(), dirichlet));
        // the tridiagonal solve has a backward-stable residual
        let w = u.inverse_laplacian();
        let back = w.laplacian().scale(-1.0);
        worst_solve =
            worst_solve.max(back.sub(&u).unwrap().norm_linf() / (4.0 / (h * h) * w.norm_linf()));
        // H⁻¹ pairing is symmetric and equals <(−Δ)^{-1}u, −Δ(−Δ)^{-1}v>
        worst_sbp = worst_sbp.max(rel(
            u.inner_hminus1(&v).unwrap(),
            v.inner_hminus1(&u).unwrap(),
        ));

        let sol = grid.constant(2.0).inverse_laplacian();
        nodal_parabola.push(sol.sub(&grid.sample(|x| 1.0 - x * x)).unwrap().norm_linf());
        parabola.push(reconstruction_error(&sol, |x| 1.0 - x * x));
        let c = PI / 2.0;
        let smooth = grid.sample(|x| c * c * (c * x).cos()).inverse_laplacian();
        cosine.push(
            smooth
                .sub(&grid.sample(|x| (c * x).cos()))
                .unwrap()
                .norm_linf(),
        );
    }
    let ratios = |e: &[f64]| e.windows(2).map(|w| w[0] / w[1]).collect::<Vec<_>>();
    let (rp, rc) = (ratios(&parabola), ratios(&cosine));
    info(format!(
        "nodal error against 1-x² is rounding only: {:?}",
        nodal_parabola
            .iter()
            .map(|e| format!("{e:.1e}"))
            .collect::<Vec<_>>()
    ));
    let in_band = |r: &[f64]| r.iter().all(|r| (3.5..=4.5).contains(r));
    check(
        worst_sbp <= 1e-12
            && worst_solve <= 1e-12
            && nodal_parabola.iter().all(|e| *e <= 1e-12)
            && in_band(&rp)
            && in_band(&rc),
        format!(
            "identities rel err {worst_sbp:.1e}; solve backward err {worst_solve:.1e}; 1-x² reconstruction ratios {rp:.3?}; \
             cos(πx/2) nodal ratios {rc:.3?}"
        ),
    )
}

// 3 -------------------------------------------------------------------------

fn c3_contraction(ctx: &Ctx) -> Outcome {
    let (grid, model, cfg) = default_setup(63);
    let pairs = random_pairs(&grid, 20, 4.0, 303);
    let r = contraction_suite(&pairs, &model, &cfg, 50, ctx.workers).map_err(|e| e.to_string())?;
    let frac = r.details["nonincreasing_step_fraction"]
        .as_f64()
        .unwrap_or(f64::NAN);
    check(
        r.estimate == 1.0 && frac >= 0.99 && r.passed,
        format!(
            "{} coupled paths: terminal contraction {:.4}, max excess {:.2e}, nonincreasing steps {:.5}",
            r.n_paths, r.estimate, r.details["max_terminal_excess"].as_f64().unwrap_or(f64::NAN), frac
        ),
    )
}

// 4 -------------------------------------------------------------------------

fn c4_fixed_point(_: &Ctx) -> Outcome {
    let grid = Grid::new(255).unwrap();
    let g = grid.constant(4.0);
    let cfg = SolverConfig::new(1e-3, 1e-2, 50.0).with_save_every(10);
    let exact = grid.sample(|x| (2.0 * (1.0 - x * x)).max(1.0));
    let upper = det_solve(&grid.constant(4.0), &g, &cfg, 50.0).map_err(|e| e.to_string())?;
    let lower = det_solve(&grid.constant(-4.0), &g, &cfg, 50.0).map_err(|e| e.to_string())?;
    let d_up = upper.terminal().dist_hminus1(&exact).unwrap();
    let d_low = lower.terminal().dist_hminus1(&exact).unwrap();
    let mut starts: Vec<Field> = (0..16).map(|i| random_field(&grid, 4.0, 400 + i)).collect();
    starts.push(grid.sample(|x| 4.0 * (7.0 * x).sin()));
    starts.push(grid.zeros());
    let mut violations = 0;
    let mut checked = 0;
    for x0 in &starts {
        let mid = det_solve(x0, &g, &cfg, 50.0).map_err(|e| e.to_string())?;
        for ((lo, m), hi) in lower
            .snapshots
            .iter()
            .zip(&mid.snapshots)
            .zip(&upper.snapshots)
        {
            checked += 1;
            let ok = lo
                .values()
                .iter()
                .zip(m.values())
                .zip(hi.values())
                .all(|((l, m), h)| l - m <= 1e-10 && m - h <= 1e-10);
            violations += usize::from(!ok);
        }
    }
    check(
        d_up <= 1e-2 && d_low <= 1e-2 && violations == 0,
        format!(
            "distance from above {d_up:.2e}, from below {d_low:.2e}; \
             {} starts sandwiched at {checked} saved times, {violations} violations",
            starts.len()
        ),
    )
}

// 5 -------------------------------------------------------------------------

fn c5_comparison(_: &Ctx) -> Outcome {
    let (grid, model, cfg) = default_setup(63);
    let pairs = random_ordered_pairs(&grid, 100, 4.0, 505);
    let mut failed = 0;
    let mut times = 0;
    for (x, y) in &pairs {
        let r = comparison_check(x, y, model.forcing(), &cfg, 1.0).map_err(|e| e.to_string())?;
        times += r.checked_times;
        failed += usize::from(!r.passed);
    }
    check(
        failed == 0,
        format!(
            "{} ordered pairs, {times} saved times checked, {failed} violations",
            pairs.len()
        ),
    )
}

// 6 -------------------------------------------------------------------------

fn energy_line(r: &ErgodicsReport) -> String {
    format!(
        "time means {} at T = {}, max/min {:.3}",
        r.details["time_mean"], r.details["T"], r.estimate
    )
}

fn c6_energy(ctx: &Ctx) -> Outcome {
    let (_, model, cfg) = default_setup(63);
    let horizons = [5.0, 10.0, 20.0];
    let start = fixed_point(model.forcing()).map_err(|e| e.to_string())?;
    let r = energy_scaling(&start, &horizons, &model, &cfg, 100, ctx.workers)
        .map_err(|e| e.to_string())?;
    let hot = model.grid().constant(4.0);
    let r4 = energy_scaling(&hot, &horizons, &model, &cfg, 100, ctx.workers)
        .map_err(|e| e.to_string())?;
    info(format!(
        "from x0 ≡ 4 (transient ‖x0‖²/T included): {}",
        energy_line(&r4)
    ));
    check(
        r.passed && r.estimate <= 2.0,
        format!("from the equilibrium: {}", energy_line(&r)),
    )
}

// 7 -------------------------------------------------------------------------

fn c7_tube(ctx: &Ctx) -> Outcome {
    let (_, model, cfg) = default_setup(63);
    let betas = [1.0, 2.0, 4.0];
    let sweep = model
        .tube_sweep(0.5, &betas, cfg.dt, 10_000, 707, ctx.workers)
        .map_err(|e| e.to_string())?;
    let at2 = &sweep.estimates[1];
    check(
        at2.estimate > 0.0 && at2.ci_low > 0.0 && sweep.monotone,
        format!(
            "P(tube) at beta = {:?}: {:?}; beta = 2 Wilson interval [{:.4}, {:.4}]",
            betas,
            sweep
                .estimates
                .iter()
                .map(|e| e.estimate)
                .collect::<Vec<_>>(),
            at2.ci_low,
            at2.ci_high
        ),
    )
}

// 8 -------------------------------------------------------------------------

fn c8_accessibility(ctx: &Ctx) -> Outcome {
    let (grid, model, cfg) = default_setup(63);
    let (delta, radius, horizon) = (0.1, 4.0, 20.0);
    let target = fixed_point(model.forcing()).map_err(|e| e.to_string())?;
    let starts = [grid.constant(3.0), grid.constant(-3.0), grid.zeros()];
    let labels = ["≡3", "≡-3", "0"];

    let mut s = 0.0_f64;
    for x0 in &starts {
        let t = first_entrance_time(x0, model.forcing(), &cfg, delta, 50.0)
            .map_err(|e| e.to_string())?
            .ok_or("controlled flow did not reach the delta ball by t = 50")?;
        s = s.max(t);
    }
    s = s.max(cfg.dt * cfg.save_every as f64);
    info(format!("pilot horizon S = {s:.3}"));

    let mut access = Vec::new();
    for x0 in &starts {
        access.push(
            accessibility(x0, &model, &cfg, s, delta, radius, 400, ctx.workers)
                .map_err(|e| e.to_string())?,
        );
    }
    let gamma = access
        .iter()
        .min_by(|a, b| a.estimate.total_cmp(&b.estimate))
        .unwrap()
        .clone();
    let spec = OccupationSpec::new(radius, delta, horizon - s).map_err(|e| e.to_string())?;

    let mut ok = access.iter().all(|a| a.ci_low > 0.0);
    let mut parts = vec![format!(
        "accessibility {:?}",
        access
            .iter()
            .map(|a| format!("{:.3} [{:.3},{:.3}]", a.estimate, a.ci_low, a.ci_high))
            .collect::<Vec<_>>()
    )];
    for (x0, label) in starts.iter().zip(labels) {
        let lb = lower_bound(
            x0,
            &target,
            &model,
            &cfg,
            delta,
            &[horizon],
            100,
            ctx.workers,
        )
        .map_err(|e| e.to_string())?;
        let occ = occupation_average(x0, &spec, &model, &cfg, 100, ctx.workers)
            .map_err(|e| e.to_string())?;
        let chain = product_chain(&lb, &gamma, &occ, horizon, s);
        ok &= lb.ci_low > 0.0 && chain.holds;
        parts.push(format!(
            "x0 {label}: lower bound {:.3} (Wilson low {:.3}) >= {:.3} - {:.3}: {} (without slack: {})",
            lb.estimate, lb.ci_low, chain.rhs, chain.slack, chain.holds, lb.estimate >= chain.rhs
        ));
    }

    let loose = SolverConfig {
        epsilon: 0.1,
        ..cfg.clone()
    };
    let lb_loose = lower_bound(
        &starts[0],
        &target,
        &model,
        &loose,
        delta,
        &[horizon],
        50,
        ctx.workers,
    )
    .map_err(|e| e.to_string())?;
    info(format!(
        "at epsilon = 0.1 the lower bound from ≡3 is {:.3} [{:.3}, {:.3}]",
        lb_loose.estimate, lb_loose.ci_low, lb_loose.ci_high
    ));
    check(ok, parts.join("; "))
}

// 9 -------------------------------------------------------------------------

fn c9_e_property(ctx: &Ctx) -> Outcome {
    let (grid, model, cfg) = default_setup(63);
    let pairs = random_pairs(&grid, 10, 3.0, 909);
    let f = CappedDistance::from_origin(&grid, 1.0);
    let fs: [&dyn LipschitzFunctional; 1] = [&f];
    let r = e_property_probe(
        &pairs,
        &fs,
        &model,
        &cfg,
        &[0.1, 0.5, 1.0, 2.0],
        50,
        ctx.workers,
    )
    .map_err(|e| e.to_string())?;
    let cells = r.details["cells"].as_array().map_or(0, Vec::len);
    let held = (r.estimate * cells as f64).round() as usize;
    check(
        cells == 40 && r.passed && r.estimate == 1.0,
        format!("{held}/{cells} cells within the Lipschitz bound plus 3 standard errors"),
    )
}

// 10 ------------------------------------------------------------------------

fn c10_invariant(ctx: &Ctx) -> Outcome {
    let (grid, model, cfg) = default_setup(63);
    let starts = [grid.constant(-3.0), grid.zeros(), grid.constant(3.0)];
    let run = |sharing| {
        empirical_invariant(&starts, &model, &cfg, 100.0, 20.0, 30, sharing, ctx.workers)
            .map_err(|e| e.to_string())
    };
    let common = run(NoiseSharing::Common)?;
    info(format!(
        "common noise: max z {:.3e}, passed {}",
        common.details["max_z"].as_f64().unwrap_or(f64::NAN),
        common.passed
    ));
    let r = run(NoiseSharing::Independent)?;
    check(
        r.passed,
        format!(
            "independent noise: {:.0}% of comparisons within 3 combined errors, max z {:.2}",
            100.0 * r.estimate,
            r.details["max_z"].as_f64().unwrap_or(f64::NAN)
        ),
    )
}

// 11 ------------------------------------------------------------------------

fn spm(dir: &Path, workers: usize, sub: &str, sets: &[&str]) -> Result<i32, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spm"));
    cmd.arg(sub)
        .arg("--output")
        .arg(dir)
        .arg("--workers")
        .arg(workers.to_string());
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    out.status
        .code()
        .ok_or_else(|| "spm terminated by a signal".to_string())
}

fn c11_reproducibility(_: &Ctx) -> Outcome {
    let suites: [(&str, &[&str]); 4] = [
        (
            "contraction",
            &["experiment.parameters={\"n_pairs\": 3, \"n_paths\": 8}"],
        ),
        (
            "occupation",
            &["experiment.parameters={\"T\": 2, \"n_paths\": 12}"],
        ),
        (
            "e-property",
            &["experiment.parameters={\"n_pairs\": 2, \"times\": [0.1, 0.3], \"n_paths\": 10}"],
        ),
        ("tube", &["experiment.parameters.n_paths=500"]),
    ];
    let mut compared = 0;
    for (sub, sets) in suites {
        let mut all: Vec<&str> = vec!["grid.n_interior=31", "solver.dt=0.002"];
        all.extend_from_slice(sets);
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        let ca = spm(a.path(), 1, sub, &all)?;
        let cb = spm(b.path(), 4, sub, &all)?;
        if ca != cb || !(ca == 0 || ca == 4) {
            return Err(format!("{sub}: exit codes {ca} and {cb}"));
        }
        let mut names: Vec<String> = std::fs::read_dir(a.path())
            .map_err(|e| e.to_string())?
            .filter_map(|e| e.ok()?.file_name().into_string().ok())
            .filter(|n| n != "manifest.json")
            .collect();
        names.sort();
        for name in &names {
            let x = std::fs::read(a.path().join(name)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.path().join(name)).map_err(|e| format!("{sub}/{name}: {e}"))?;
            if x != y {
                return Err(format!("{sub}/{name} differs between 1 and 4 workers"));
            }
            compared += 1;
        }
        let manifest = |d: &Path| -> Result<serde_json::Value, String> {
            let text =
                std::fs::read_to_string(d.join("manifest.json")).map_err(|e| e.to_string())?;
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        let (ma, mb) = (manifest(a.path())?, manifest(b.path())?);
        if ma["artifacts"] != mb["artifacts"] || ma["config_sha256"] != mb["config_sha256"] {
            return Err(format!("{sub}: manifests disagree on hashes"));
        }
    }
    Ok(format!(
        "{compared} artifacts byte-identical across 1 and 4 workers in 4 suites"
    ))
}

// ---------------------------------------------------------------------------

fn criteria() -> Vec<Criterion> {
    let s = Duration::from_secs;
    vec![
        Criterion {
            id: 1,
            name: "Yosida exactness",
            limit: s(1),
            run: c1_yosida,
        },
        Criterion {
            id: 2,
            name: "discrete calculus",
            limit: s(1),
            run: c2_discrete_calculus,
        },
        Criterion {
            id: 3,
            name: "pathwise contraction",
            limit: s(120),
            run: c3_contraction,
        },
        Criterion {
            id: 4,
            name: "deterministic fixed point",
            limit: s(120),
            run: c4_fixed_point,
        },
        Criterion {
            id: 5,
            name: "comparison principle",
            limit: s(60),
            run: c5_comparison,
        },
        Criterion {
            id: 6,
            name: "energy-estimate scaling",
            limit: s(300),
            run: c6_energy,
        },
        Criterion {
            id: 7,
            name: "noise tube",
            limit: s(60),
            run: c7_tube,
        },
        Criterion {
            id: 8,
            name: "accessibility and lower bound",
            limit: s(600),
            run: c8_accessibility,
        },
        Criterion {
            id: 9,
            name: "e-property probe",
            limit: s(300),
            run: c9_e_property,
        },
        Criterion {
            id: 10,
            name: "uniqueness proxy",
            limit: s(900),
            run: c10_invariant,
        },
        Criterion {
            id: 11,
            name: "reproducibility",
            limit: s(600),
            run: c11_reproducibility,
        },
    ]
}

fn main() {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let ctx = Ctx {
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let mut failures = Vec::new();
    let mut ran = 0;
    for c in criteria() {
        if !wanted.is_empty() && !wanted.contains(&c.id) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| (c.run)(&ctx))).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = started.elapsed();
        let over = elapsed > c.limit;
        let (tag, mut detail) = match &outcome {
            Ok(d) if !over => ("PASS", d.clone()),
            Ok(d) | Err(d) => ("FAIL", d.clone()),
        };
        if over {
            detail.push_str(&format!("; exceeded the {} s budget", c.limit.as_secs()));
        }
        println!(
            "[{tag}] criterion {:>2} {} ({:.1} s): {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64()
        );
        if tag == "FAIL" {
            failures.push(c.id);
        }
    }
    println!(
        "acceptance: {} of {ran} criteria passed{}",
        ran - failures.len(),
        if failures.is_empty() {
            String::new()
        } else {
            format!("; failed {failures:?}")
        }
    );
    if !failures.is_empty() {
        std::process::exit(1);
    }
}
