//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use stochmatch::analysis::{
    chebyshev_bound, greedy_expect_closed, greedy_expect_recurrence, poisson_binomial_tail,
    round_dist, sbal_total_bound,
};
use stochmatch::benchmarks::{opt_fractional, sopt_bruteforce, sopt_dp};
use stochmatch::dualaudit::{
    audited_run, epsilon_curve, nondecreasing_up_to_ci, Family, IDENTITY_TOL,
};
use stochmatch::engine::{monte_carlo, round_successes, McConfig, OutcomeOracle};
use stochmatch::experiments::{convergence_rows, ConvergenceConfig, TieBreak};
use stochmatch::model::{gen_gnb, gen_hetero, gen_random, HeteroSpec, Instance, RandomSpec};
use stochmatch::policies::{Greedy, StochasticBalance, C};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_formulas() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=30 {
        for m in 0..=n {
            let r = greedy_expect_recurrence(n, m).map_err(|e| e.to_string())?;
            let c = greedy_expect_closed(n, m).map_err(|e| e.to_string())?;
            worst = worst.max((r - c).abs());
        }
    }
    check(
        worst <= 1e-9,
        format!("max |recurrence - closed| = {worst:.3e}"),
    )
}

fn c2_greedy_sim() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for n in [1, 2, 3, 5, 8] {
        let g = gen_gnb(n, 1, 0.01).map_err(|e| e.to_string())?;
        let s = monte_carlo(&g, &Greedy, &McConfig::new(100_000, 20 + n as u64))
            .map_err(|e| e.to_string())?;
        let want = greedy_expect_closed(n, n).map_err(|e| e.to_string())?;
        let tol = 3.0 * s.ci95 + 0.01 * n as f64;
        ok &= (s.mean - want).abs() <= tol;
        lines.push(format!("n={n}: {:.4} vs {want:.4} (tol {tol:.4})", s.mean));
    }
    check(ok, lines.join("; "))
}

fn c3_round_dist() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for b in [1u32, 3] {
        let g = gen_gnb(1, b, 0.01).map_err(|e| e.to_string())?;
        let h = round_successes(
            &g,
            &StochasticBalance,
            &McConfig::new(100_000, 30 + b as u64),
        )
        .map_err(|e| e.to_string())?;
        let tv = round_dist(b, b as usize).total_variation(&h.pmf(0));
        ok &= tv < 0.02;
        lines.push(format!("b={b}: TV {tv:.4}"));
    }
    check(ok, lines.join("; "))
}

fn c4_sbal_bound() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (n, b) in [(10, 1), (10, 3), (20, 1)] {
        let g = gen_gnb(n, b, 0.01).map_err(|e| e.to_string())?;
        let s = monte_carlo(&g, &StochasticBalance, &McConfig::new(10_000, 40))
            .map_err(|e| e.to_string())?;
        let bound = sbal_total_bound(n, b).map_err(|e| e.to_string())?.aggregate;
        ok &= s.mean <= bound + 3.0 * s.ci95;
        lines.push(format!("({n},{b}): {:.3} <= {bound}", s.mean));
    }
    check(ok, lines.join("; "))
}

/// Trials per n for the convergence sweep; n = 200 alone has 20000 requests.
const CONVERGENCE_TRIALS: u64 = 2000;

fn c5_convergence() -> Outcome {
    let cfg = ConvergenceConfig {
        n_list: vec![25, 50, 100, 200],
        b: 1,
        p: 0.01,
        trials: CONVERGENCE_TRIALS,
        seed: 50,
        // the bound's symmetry argument needs exchangeable tied servers
        tie_break: TieBreak::Random,
        workers: 0,
    };
    let rows = convergence_rows(&cfg).map_err(|e| e.to_string())?;
    let decreasing = rows
        .windows(2)
        .all(|w| w[1].implied_ratio - w[1].implied_ci95 <= w[0].implied_ratio + w[0].implied_ci95);
    let last = rows.last().unwrap().implied_ratio;
    let in_band = (C - 0.01..=C + 0.05).contains(&last);
    let series: Vec<String> = rows
        .iter()
        .map(|r| format!("{}:{:.4}", r.n, r.implied_ratio))
        .collect();
    check(
        decreasing && in_band,
        format!(
            "ratios {} (band [{:.4}, {:.4}])",
            series.join(" "),
            C - 0.01,
            C + 0.05
        ),
    )
}

fn tiny_instance(rng: &mut ChaCha8Rng, max_requests: usize) -> Instance {
    gen_random(&RandomSpec {
        n_servers: rng.gen_range(1..=3),
        n_requests: rng.gen_range(1..=max_requests),
        edge_density: rng.gen_range(0.3..=1.0),
        p_range: (0.01, 1.0),
        cap_range: (1, 2),
        weight_range: (0.5, 2.0),
        seed: rng.gen(),
    })
    .unwrap()
}

fn c6_benchmarks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let (mut order_gap, mut oracle_gap, mut brute_count): (f64, f64, usize) =
        (f64::NEG_INFINITY, 0.0, 0);
    for _ in 0..200 {
        let g = tiny_instance(&mut rng, 5);
        let dp = sopt_dp(&g).map_err(|e| e.to_string())?.value;
        let lp = opt_fractional(&g).map_err(|e| e.to_string())?.value;
        order_gap = order_gap.max(dp - lp);
        if g.n_requests() <= 4 {
            let bf = sopt_bruteforce(&g).map_err(|e| e.to_string())?;
            oracle_gap = oracle_gap.max((dp - bf).abs());
            brute_count += 1;
        }
    }
    check(
        order_gap <= 1e-9 && oracle_gap <= 1e-10,
        format!("max(SOpt - Opt) = {order_gap:.3e}; max |dp - brute| = {oracle_gap:.3e} on {brute_count} instances"),
    )
}

fn max_residual(instances: &[Instance], runs: u64) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..runs {
        let g = &instances[seed as usize % instances.len()];
        let (_, ledger) =
            audited_run(g, &mut OutcomeOracle::lazy(seed)).map_err(|e| e.to_string())?;
        worst = worst.max(ledger.max_residual);
    }
    Ok(worst)
}

fn c7_dual_identity() -> Outcome {
    let mut instances = vec![
        gen_gnb(3, 5, 0.1).unwrap(),
        gen_gnb(4, 2, 0.5).unwrap(),
        gen_gnb(10, 1, 0.01).unwrap(),
    ];
    for seed in 0..3 {
        instances.push(
            gen_random(&RandomSpec {
                n_servers: 6,
                n_requests: 200,
                edge_density: 0.4,
                p_range: (0.01, 1.0),
                cap_range: (1, 20),
                weight_range: (1.0, 1.0),
                seed,
            })
            .unwrap(),
        );
    }
    let worst = max_residual(&instances, 100)?;
    check(worst < IDENTITY_TOL, format!("max residual {worst:.3e}"))
}

fn trend(family: &Family, b_list: &[u32], seed: u64) -> Outcome {
    let rows = epsilon_curve(family, b_list, 10_000, seed, 0).map_err(|e| e.to_string())?;
    let series: Vec<String> = rows
        .iter()
        .map(|r| format!("{}:{:.4}±{:.4}", r.b, r.min_ratio, r.ci95))
        .collect();
    let last = rows.last().unwrap().min_ratio;
    check(
        nondecreasing_up_to_ci(&rows) && last >= 0.95,
        format!("min slack ratio {}", series.join(" ")),
    )
}

fn c8_dual_trend() -> Outcome {
    trend(&Family::Gnb { n: 3, p: 0.1 }, &[1, 5, 25, 125], 80)
}

const HETERO_P: (f64, f64) = (0.05, 0.15);
const HETERO_W: (f64, f64) = (0.5, 2.0);

fn c9_weighted() -> Outcome {
    // identity on capacities 5..=50 and weights in [0.5, 2]
    let instances: Vec<Instance> = (0..4)
        .map(|seed| {
            gen_hetero(&HeteroSpec {
                n: 4,
                b_min: 5,
                spread: 10,
                p_range: HETERO_P,
                weight_range: HETERO_W,
                seed,
            })
            .unwrap()
        })
        .collect();
    let worst = max_residual(&instances, 100)?;
    let identity = check(worst < IDENTITY_TOL, format!("max residual {worst:.3e}"));
    let family = Family::Hetero {
        n: 3,
        spread: 10,
        p_range: HETERO_P,
        weight_range: HETERO_W,
        seed: 90,
    };
    let sweep = trend(&family, &[1, 5, 25, 125], 91);
    match (identity, sweep) {
        (Ok(a), Ok(b)) => Ok(format!("{a}; {b}")),
        (a, b) => Err(format!(
            "{}; {}",
            a.unwrap_or_else(|e| e),
            b.unwrap_or_else(|e| e)
        )),
    }
}

fn enumerate_tail(probs: &[f64], threshold: usize) -> f64 {
    (0u32..1 << probs.len())
        .filter(|mask| mask.count_ones() as usize >= threshold)
        .map(|mask| {
            probs
                .iter()
                .enumerate()
                .map(|(i, p)| if mask >> i & 1 == 1 { *p } else { 1.0 - p })
                .product::<f64>()
        })
        .sum()
}

fn c10_tail() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let (mut gap, mut cheb_viol, mut cheb_checked): (f64, f64, usize) = (0.0, f64::NEG_INFINITY, 0);
    for _ in 0..100 {
        let k = rng.gen_range(1..=12);
        let probs: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let threshold = rng.gen_range(0..=k + 1);
        let exact = poisson_binomial_tail(&probs, threshold).map_err(|e| e.to_string())?;
        gap = gap.max((exact - enumerate_tail(&probs, threshold)).abs());
        let load: f64 = probs.iter().sum();
        if load < threshold as f64 {
            let cheb = chebyshev_bound(load, threshold as f64).map_err(|e| e.to_string())?;
            cheb_viol = cheb_viol.max(exact - cheb);
            cheb_checked += 1;
        }
    }
    check(
        gap <= 1e-12 && cheb_viol <= 0.0,
        format!("max |dp - 2^k| = {gap:.3e}; Chebyshev checked on {cheb_checked}, max excess {cheb_viol:.3e}"),
    )
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        (
            "formula cross-validation",
            Duration::from_secs(1),
            c1_formulas,
        ),
        (
            "greedy simulation vs closed form",
            Duration::from_secs(60),
            c2_greedy_sim,
        ),
        ("round distribution", Duration::from_secs(60), c3_round_dist),
        (
            "StochasticBalance bound",
            Duration::from_secs(120),
            c4_sbal_bound,
        ),
        (
            "convergence to 1-1/e",
            Duration::from_secs(600),
            c5_convergence,
        ),
        (
            "benchmark ordering",
            Duration::from_secs(120),
            c6_benchmarks,
        ),
        ("dual identity", Duration::from_secs(30), c7_dual_identity),
        (
            "dual feasibility trend",
            Duration::from_secs(600),
            c8_dual_trend,
        ),
        (
            "weighted and variable capacities",
            Duration::from_secs(600),
            c9_weighted,
        ),
        ("Poisson-binomial oracle", Duration::from_secs(10), c10_tail),
    ];
    let mut failures = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over time budget {budget:?}")),
            Err(d) => (false, d),
        };
        failures += !pass as usize;
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.2}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
