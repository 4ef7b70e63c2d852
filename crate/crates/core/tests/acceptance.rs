//! Acceptance checks, one line per criterion. Exits nonzero if any check fails.

use std::process::ExitCode;
use std::time::Instant;

use ldrec_core::action::{exit_action_closed_form, minimize_exit_action, path_action, ExitProblem};
use ldrec_core::noise::{check_conditions, empirical_scaled_rate, legendre, FiniteSupport};
use ldrec_core::rare_event::{crude_mc_exceedance, exit_time_mc, rate_sweep, survival_vs_geometric, tilted_is_exceedance, MonteCarlo};
use ldrec_core::recursion::simulate_seeded;
use ldrec_core::{NoiseModel, RateProfile, RecursionModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: u32, name: &str, budget_s: f64, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let secs = start.elapsed().as_secs_f64();
    let in_time = secs <= budget_s;
    let pass = out.pass && in_time;
    println!(
        "criterion {id} [{name}]: {} | {} | {secs:.2}s of {budget_s}s{}",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        if in_time { "" } else { " (over budget)" }
    );
    pass
}

fn ar1(a: f64, eps: f64) -> RecursionModel {
    RecursionModel::ar1(a, 0.0, NoiseModel::Gaussian01, eps).unwrap()
}

fn phi(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as i64;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

fn legendre_gaussian() -> Outcome {
    let err = grid(-10.0, 10.0, 0.01)
        .into_iter()
        .map(|v| (legendre(&NoiseModel::Gaussian01, v) - v * v / 2.0).abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: err <= 1e-8,
        detail: format!("max |L(v) - v²/2| = {err:.3e}, tol 1e-8"),
    }
}

fn legendre_skellam() -> Outcome {
    let err = grid(-20.0, 20.0, 0.01)
        .into_iter()
        .map(|v| {
            let exact = v * (v / 2.0).asinh() - (v * v + 4.0).sqrt() + 2.0;
            (legendre(&NoiseModel::SkellamUnit, v) - exact).abs()
        })
        .fold(0.0, f64::max);
    Outcome {
        pass: err <= 1e-8,
        detail: format!("max |L(v) - closed form| = {err:.3e}, tol 1e-8"),
    }
}

fn skellam_convergence() -> Outcome {
    let eps = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let mut pass = true;
    let mut parts = Vec::new();
    for v in [1.0f64, 2.0] {
        let gaps: Vec<f64> = eps
            .iter()
            .map(|&e| (empirical_scaled_rate(&NoiseModel::SkellamUnit, v, e, None).unwrap() - v.abs()).abs())
            .collect();
        let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
        let last = gaps[gaps.len() - 1];
        pass &= decreasing && last < 0.05;
        parts.push(format!(
            "v={v}: gaps {} decreasing={decreasing} gap(1e-6)={last:.4} (tol 0.05)",
            gaps.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>().join(" ")
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn tilt_conditions() -> Outcome {
    let eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let vs = [-3.0, -1.0, 0.5, 1.0, 2.0];
    let g = check_conditions(&NoiseModel::Gaussian01, &eps, &vs).unwrap();
    let mut speed_err = 0.0f64;
    let mut curv_err = 0.0f64;
    for r in &g.rows {
        speed_err = speed_err.max((r.q_over_eps_abs_t.unwrap() - r.v.abs()).abs() / r.v.abs());
        curv_err = curv_err.max((r.eps2_h2.unwrap() - r.eps * r.eps).abs() / (r.eps * r.eps));
    }
    let gauss_ok = speed_err <= 1e-14 && curv_err <= 1e-14;

    let sk_eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
    let s = check_conditions(&NoiseModel::SkellamUnit, &sk_eps, &[1.0]).unwrap();
    let curv: Vec<f64> = s.rows.iter().map(|r| r.eps2_h2.unwrap()).collect();
    let decreasing = curv.windows(2).all(|w| w[1] < w[0]);
    let last = curv[curv.len() - 1];
    Outcome {
        pass: gauss_ok && decreasing && last < 1e-4,
        detail: format!(
            "gaussian max rel err (q/ε)|t| vs |v| = {speed_err:.1e}, ε²H'' vs ε² = {curv_err:.1e} (tol 1e-14); \
             skellam v=1 ε²H'' {} decreasing={decreasing} value(1e-5)={last:.3e} (tol 1e-4)",
            curv.iter().map(|c| format!("{c:.3e}")).collect::<Vec<_>>().join(" ")
        ),
    }
}

fn minimizer_vs_closed_form() -> Outcome {
    let g = RateProfile::gaussian();
    let mut worst_rel = 0.0f64;
    let mut worst_cos = 1.0f64;
    for a in [-0.9, -0.5, 0.0, 0.5, 0.9] {
        for m in [1, 2, 5, 10] {
            let cf = exit_action_closed_form(&ExitProblem::gaussian(a, m).unwrap()).unwrap();
            let r = minimize_exit_action(&ar1(a, 0.1), m, 1.0, &g).unwrap();
            worst_rel = worst_rel.max((r.value - cf).abs() / cf);
            let tau = r.hit_index;
            let shape: Vec<f64> = (1..=tau).map(|k| a.powi((tau - k) as i32)).collect();
            let dot: f64 = r.noise.iter().zip(&shape).map(|(x, y)| x * y).sum();
            let nn: f64 = r.noise.iter().map(|x| x * x).sum::<f64>().sqrt();
            let ns: f64 = shape.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst_cos = worst_cos.min(dot / (nn * ns));
        }
    }
    Outcome {
        pass: worst_rel <= 1e-6 && worst_cos >= 1.0 - 1e-6,
        detail: format!("worst relative gap {worst_rel:.2e} (tol 1e-6), worst cosine {worst_cos:.9} (min 1 - 1e-6)"),
    }
}

fn probability_asymptotics() -> Outcome {
    let (a, m) = (0.5f64, 5);
    let target = -(1.0 - a * a) / (2.0 * (1.0 - a.powi(2 * m as i32)));
    let mc = MonteCarlo::new(20_240_601);
    let sweep = rate_sweep(&ar1(a, 1.0), m, 1.0, &[0.35, 0.25, 0.18, 0.13], 200_000, &mc).unwrap();
    let extrapolated = sweep.extrapolated.unwrap_or(f64::NAN);
    let rel = ((extrapolated - target) / target).abs();

    let model = ar1(a, 0.35);
    let c = crude_mc_exceedance(&model, m, 1.0, 200_000, &mc.derive(100)).unwrap();
    let t = tilted_is_exceedance(&model, m, 1.0, 200_000, &mc.derive(101)).unwrap();
    let z = (c.p_hat - t.p_hat).abs() / (c.std_err.powi(2) + t.std_err.powi(2)).sqrt();
    let scaled: Vec<String> = sweep
        .results
        .iter()
        .map(|r| format!("{}:{:.5}", r.eps, r.scaled_log_p.unwrap_or(f64::NAN)))
        .collect();
    Outcome {
        pass: rel <= 0.10 && z < 3.0,
        detail: format!(
            "ε² log p̂ [{}] extrapolated {extrapolated:.5} vs {target:.5} (rel {rel:.3}, tol 0.10); \
             ε=0.35 crude {:.5e} vs tilted {:.5e}, |z| = {z:.2} (tol 3)",
            scaled.join(" "),
            c.p_hat,
            t.p_hat
        ),
    }
}

fn exit_time_slope() -> Outcome {
    let mc = MonteCarlo::new(20_240_602);
    let r = exit_time_mc(&ar1(0.5, 1.0), 1.0, &[0.5, 0.45, 0.4, 0.35], 20_000, 10_000_000, &mc).unwrap();
    let slope = r.slope.unwrap_or(f64::NAN);
    let rel = (slope - 0.375).abs() / 0.375;
    let censor_ok = r.censored_counts.iter().all(|&c| (c as f64) < 0.01 * r.n as f64);
    let (lo, hi) = r.slope_ci.unwrap_or((f64::NAN, f64::NAN));

    let p = 2.0 * phi(-2.0);
    let anchor = exit_time_mc(&ar1(0.0, 1.0), 1.0, &[0.5], 20_000, 10_000_000, &mc.derive(1)).unwrap();
    let z = (anchor.mean_tau[0] - 1.0 / p).abs() / anchor.std_err[0];
    Outcome {
        pass: rel <= 0.15 && censor_ok && z < 4.0,
        detail: format!(
            "mean τ {:?}, censored {:?}; slope {slope:.4} vs 0.375 (rel {rel:.3}, tol 0.15), 95% CI [{lo:.4}, {hi:.4}]; \
             a=0 ε=0.5 mean τ {:.3} vs {:.3} ({z:.2}σ, tol 4)",
            r.mean_tau.iter().map(|t| (t * 100.0).round() / 100.0).collect::<Vec<_>>(),
            r.censored_counts,
            anchor.mean_tau[0],
            1.0 / p
        ),
    }
}

fn geometric_bound() -> Outcome {
    let mc = MonteCarlo::new(20_240_603);
    let exact = survival_vs_geometric(&ar1(0.0, 0.5), 5, 20, 100_000, 1.0, &mc).unwrap();
    let memory = survival_vs_geometric(&ar1(0.9, 0.3), 10, 20, 100_000, 1.0, &mc.derive(1)).unwrap();
    let max_z = |t: &ldrec_core::rare_event::SurvivalTable| t.rows.iter().map(|r| r.z_score).fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        pass: exact.violations() == 0 && memory.violations() == 0,
        detail: format!(
            "a=0: {} violations, max z {:.2}; a=0.9 ε=0.3 M=10: {} violations, max z {:.2} (limit 3σ over 20 blocks)",
            exact.violations(),
            max_z(&exact),
            memory.violations(),
            max_z(&memory)
        ),
    }
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let coin = NoiseModel::FiniteSupport(FiniteSupport::new(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap());
    let models = [
        NoiseModel::Gaussian01,
        NoiseModel::SkellamUnit,
        coin,
        NoiseModel::sum(NoiseModel::Gaussian01, NoiseModel::SkellamUnit),
    ];
    let mut failures = Vec::new();

    // convexity, duality, Young
    let mut noise_ok = true;
    for model in &models {
        for _ in 0..500 {
            let (s, t): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let h = |x| model.cumulant(x).unwrap();
            let mid = h(0.5 * (s + t));
            noise_ok &= mid <= 0.5 * (h(s) + h(t)) + 1e-12 * (1.0 + h(s).abs() + h(t).abs());
            let d = model.cumulant_derivs(t).unwrap();
            let dual = legendre(model, d.h1);
            noise_ok &= (dual - (t * d.h1 - d.h)).abs() <= 1e-8 * (1.0 + dual.abs());
            let v: f64 = rng.random_range(-4.0..4.0);
            noise_ok &= t * v <= d.h + legendre(model, v) + 1e-9;
        }
    }
    if !noise_ok {
        failures.push("noise invariants");
    }

    // seed determinism and replay
    let mut rec_ok = true;
    for seed in 0..50u64 {
        let m = ar1(rng.random_range(-0.99..0.99), rng.random_range(0.01..1.0));
        let x = simulate_seeded(&m, 200, seed).unwrap();
        rec_ok &= x == simulate_seeded(&m, 200, seed).unwrap() && x.reproduces(&m);
    }
    if !rec_ok {
        failures.push("recursion determinism/replay");
    }

    // nonnegativity and brute force over the single interior point
    let g = RateProfile::gaussian();
    let mut act_ok = true;
    for _ in 0..500 {
        let a = rng.random_range(-1.5..1.5);
        let path: Vec<f64> = std::iter::once(0.0).chain((0..10).map(|_| rng.random_range(-3.0..3.0))).collect();
        act_ok &= path_action(&ar1(a, 0.1), &path, &g).total >= 0.0;
    }
    for a in [-0.9, -0.5, 0.0, 0.5, 0.9] {
        let brute = (-10_000..=10_000)
            .map(|i| i as f64 * 1e-4)
            .filter(|u: &f64| u.abs() < 1.0)
            .flat_map(|u1| [1.0, -1.0].map(|u2: f64| 0.5 * u1 * u1 + 0.5 * (u2 - a * u1).powi(2)))
            .fold(0.5f64, f64::min);
        let r = minimize_exit_action(&ar1(a, 0.1), 2, 1.0, &g).unwrap();
        act_ok &= (r.value - brute).abs() <= 1e-6;
    }
    if !act_ok {
        failures.push("action nonnegativity/brute force");
    }

    // deterministic parallel reduction
    let model = ar1(0.5, 0.3);
    let runs: Vec<_> = [1, 2, 3, 8]
        .iter()
        .map(|&w| tilted_is_exceedance(&model, 5, 1.0, 50_000, &MonteCarlo::new(77).with_workers(w)).unwrap())
        .collect();
    let again = tilted_is_exceedance(&model, 5, 1.0, 50_000, &MonteCarlo::new(77).with_workers(3)).unwrap();
    let par_ok = runs.iter().all(|r| r == &runs[0]) && again == runs[2];
    if !par_ok {
        failures.push("parallel reduction");
    }

    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "noise convexity/duality/Young, recursion determinism/replay, action nonnegativity/brute force M=2, parallel reduction: all hold".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    }
}

fn main() -> ExitCode {
    let results = [
        check(1, "legendre gaussian", 1.0, legendre_gaussian),
        check(2, "legendre skellam", 1.0, legendre_skellam),
        check(3, "skellam scaled-rate convergence", 1.0, skellam_convergence),
        check(4, "tilt conditions", 1.0, tilt_conditions),
        check(5, "exit action minimizer vs closed form", 30.0, minimizer_vs_closed_form),
        check(6, "exceedance probability asymptotics", 300.0, probability_asymptotics),
        check(7, "exit time slope", 600.0, exit_time_slope),
        check(8, "geometric survival bound", 120.0, geometric_bound),
        check(9, "property suites", 120.0, property_suites),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
