//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` cannot hold as stated; they still run
//! and print FAIL, and the process only fails when the set of failing
//! criteria differs from that list.

use std::time::{Duration, Instant};

use palign_core::align::{branch_and_bound_align, brute_force_align, DEFAULT_BUDGET};
use palign_core::cumulant::{
    default_er_grid, default_gauss_product_grid, default_gauss_sq_grid, verify_kappa_chain, CumulantModel,
    ScoreKind,
};
use palign_core::harness::{
    counting_check, cumulant_oracle_rows, digraph_invariant_check, emit_to_string, gaussian_mc_checks,
    phase_transition_experiment, sweep, tail_domination_checks, Grid, OutputFormat, PhaseSpec, SweepConfig,
    VerifyConfig, DEFAULT_VERIFY_SEED,
};
use palign_core::model::{derive_seed, rng_from_seed};
use palign_core::thresholds::{
    entropy_sum_check, eta_phi_inequality_check, fano_failure_lower_bound, kl_pair_bound, n_k, SignalParams,
};
use palign_core::{sample_instance, ModelKind, ModelParams};
use rand::Rng;

/// `N_k >= mk/3` is false at `k = m = 1` and `k = m = 2`.
const KNOWN_FAILURES: &[usize] = &[5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let t = Instant::now();
    let mut o = f();
    let el = t.elapsed();
    if let Some(lim) = limit {
        if el > lim {
            o.pass = false;
            o.detail.push_str(&format!("; runtime {:.1}s exceeds {:.0}s", el.as_secs_f64(), lim.as_secs_f64()));
        }
    }
    (o, el)
}

fn c1_er_oracle() -> Outcome {
    let cfg = VerifyConfig { gauss_mc_points: vec![], ..VerifyConfig::default() };
    let rows = cumulant_oracle_rows(&cfg, DEFAULT_VERIFY_SEED).expect("oracle rows");
    let rows: Vec<_> = rows.iter().filter(|r| r.model == CumulantModel::Er).collect();
    let worst = rows.iter().map(|r| r.abs_err / r.oracle.abs()).fold(0.0, f64::max);
    let pass = rows.len() == 3 * 3 * 3 * 8 * 2 && rows.iter().all(|r| r.pass);
    outcome(pass, format!("{} comparisons, worst relative error {worst:.2e}", rows.len()))
}

fn c2_gaussian_mc() -> Outcome {
    let cfg = VerifyConfig::default();
    let checks = gaussian_mc_checks(&cfg, DEFAULT_VERIFY_SEED).expect("mc checks");
    let worst = checks.iter().map(|c| c.sigmas).fold(0.0, f64::max);
    let all = checks.iter().all(|c| c.row.pass);
    let per_score = |s| checks.iter().filter(|c| c.row.score == s).count();
    let shape_ok = per_score(ScoreKind::Product) == 24 && per_score(ScoreKind::NegHalfSquaredDiff) == 24;
    outcome(
        all && shape_ok && cfg.gauss_mc_samples == 1_000_000,
        format!("{} comparisons at 1e6 samples, worst {worst:.2} standard errors", checks.len()),
    )
}

fn c3_kappa_chain() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut checks = 0;
    let mut pass = true;
    for grid in [default_er_grid(), default_gauss_product_grid(), default_gauss_sq_grid()] {
        let r = verify_kappa_chain(&grid, 8, 0.0).expect("chain");
        worst = worst.min(r.worst_slack);
        checks += r.checks;
        pass &= r.passed() && r.worst_slack >= -1e-12;
    }
    outcome(pass, format!("{checks} inequalities, worst slack {worst:.3e}"))
}

fn c4_digraph() -> Outcome {
    let c = digraph_invariant_check(6, 4, 20, DEFAULT_VERIFY_SEED).expect("digraph check");
    outcome(c.passed, format!("{} mappings checked, {} violations", c.checks, c.failures.len()))
}

fn c5_counting() -> Outcome {
    let c = counting_check(6).expect("counting check");
    let mut formula_ok = true;
    let mut violations = Vec::new();
    for m in 1..=12u64 {
        for k in 1..=m {
            let nk = n_k(m, k).expect("n_k");
            let c2 = |x: u64| x * x.saturating_sub(1) / 2;
            formula_ok &= nk == c2(m) - c2(m - k);
            if 3 * nk < m * k {
                violations.push(format!("N_{k}(m={m}) = {nk} < {:.3}", (m * k) as f64 / 3.0));
            }
        }
    }
    let detail = format!(
        "|T_k| bound {}, N_k formula {}, N_k >= mk/3 violated at [{}]",
        if c.passed { "holds" } else { "VIOLATED" },
        if formula_ok { "matches" } else { "MISMATCH" },
        violations.join("; ")
    );
    outcome(c.passed && formula_ok && violations.is_empty(), detail)
}

fn c6_bnb_vs_brute() -> Outcome {
    let mut rng = rng_from_seed(derive_seed(DEFAULT_VERIFY_SEED, &[6]));
    let mut mismatches = Vec::new();
    let scores = [ScoreKind::Product, ScoreKind::NegHalfSquaredDiff, ScoreKind::MleGauss];
    for i in 0..200u64 {
        let n = rng.random_range(2..=7usize);
        let m = rng.random_range(1..=n);
        let (params, score) = if i % 2 == 0 {
            let p = [0.2, 0.35, 0.5][rng.random_range(0..3usize)];
            (ModelParams::er(n, m, p, rng.random_range(0.0..1.0)), ScoreKind::Product)
        } else {
            (ModelParams::gaussian(n, m, rng.random_range(0.0..0.99)), scores[(i as usize / 2) % 3])
        };
        let inst = sample_instance(&params, derive_seed(DEFAULT_VERIFY_SEED, &[6, i])).expect("instance");
        let rho = Some(params.rho);
        let a = branch_and_bound_align(&inst.g1, &inst.g2, m, score, rho, DEFAULT_BUDGET).expect("b&b");
        let b = brute_force_align(&inst.g1, &inst.g2, m, score, rho, DEFAULT_BUDGET).expect("brute force");
        if a.mapping != b.mapping || a.score.to_bits() != b.score.to_bits() {
            mismatches.push(i);
        }
    }
    outcome(mismatches.is_empty(), format!("200 instances, n <= 7, mismatches {mismatches:?}"))
}

fn c7_rho_one() -> Outcome {
    let mut exact = 0;
    for seed in 0..100u64 {
        let inst = sample_instance(&ModelParams::gaussian(6, 4, 1.0), seed).expect("instance");
        let r = branch_and_bound_align(&inst.g1, &inst.g2, 4, ScoreKind::NegHalfSquaredDiff, Some(1.0), DEFAULT_BUDGET)
            .expect("align");
        exact += (r.mapping == inst.truth) as usize;
    }
    outcome(exact == 100, format!("exact recovery {exact}/100"))
}

fn c8_phase() -> Outcome {
    let spec = PhaseSpec {
        model: ModelKind::GaussianWigner,
        n: 12,
        p: None,
        rho: vec![0.5, 0.7, 0.9, 0.99],
        m: (3..=9).collect(),
        trials: 200,
        delta: 0.5,
        seed: 8,
        score: Some(ScoreKind::NegHalfSquaredDiff),
        budget: Some(100_000_000_000),
        parallelism: None,
    };
    let res = phase_transition_experiment(&spec).expect("phase experiment");
    let rate = |rho| res.row(rho, 8).map(|r| r.exact_rate).expect("grid point");
    let gap = rate(0.99) - rate(0.5);
    let skipped: usize = res.rows.iter().map(|r| r.skipped).sum();
    let cross: Vec<String> = res
        .crossings
        .iter()
        .map(|c| format!("{}:{}", c.rho, c.exact_m.map_or("none".into(), |m| format!("{m:.2}"))))
        .collect();
    outcome(
        res.exact_crossing_nonincreasing() && gap >= 0.3 && skipped == 0,
        format!("crossings [{}], rate gap at m=8 {gap:.3}, skipped {skipped}", cross.join(", ")),
    )
}

fn c9_inequalities() -> Outcome {
    let cfg = VerifyConfig::default();
    let eta = eta_phi_inequality_check(&cfg.gammas, &cfg.eta_fracs).expect("eta-phi");
    let ent = entropy_sum_check(&[10, 50, 100, 1000, 100_000]).expect("entropy");
    let kl_fail = cfg
        .kl_grid
        .iter()
        .filter(|&&(p, rho)| kl_pair_bound(ModelKind::ErdosRenyi, p, rho).is_err())
        .count();
    outcome(
        eta.passed() && ent.passed() && kl_fail == 0,
        format!(
            "eta-phi {} points, entropy sum {} sizes, KL {} points ({} violations)",
            eta.checks,
            ent.checks,
            cfg.kl_grid.len(),
            eta.failures.len() + ent.failures.len() + kl_fail
        ),
    )
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c10_fano() -> Outcome {
    let (n, c, delta) = (1e6_f64, 0.01, 0.5);
    // ER: m = c log n / (p^2 phi(gamma)) at m = 2, p = 1/2, solving for rho.
    let (m_er, p) = (2.0, 0.5);
    let rho_er = bisect(1e-9, 1.0 - 1e-12, |rho| {
        let sp = SignalParams::new(p, rho).expect("signal");
        m_er - c * n.ln() / (p * p * sp.phi_gamma)
    });
    let er = fano_failure_lower_bound(ModelKind::ErdosRenyi, n, m_er, p, rho_er, delta).expect("fano er");
    // Gaussian: m = c log n / log(1/(1 - rho^2)) at m = 50.
    let m_g = 50.0;
    let rho_g = (1.0 - (-c * n.ln() / m_g).exp()).sqrt();
    let g = fano_failure_lower_bound(ModelKind::GaussianWigner, n, m_g, 0.5, rho_g, delta).expect("fano gaussian");
    let (er_target, g_target) = (1.0 - 13.0 * c / delta, 1.0 - c / (2.0 * delta));
    outcome(
        er >= er_target && g >= g_target,
        format!(
            "ER m=2 rho={rho_er:.4}: {er:.4} (need {er_target:.2}); Gaussian m=50 rho={rho_g:.4}: {g:.4} (need {g_target:.2})"
        ),
    )
}

fn c11_tails() -> Outcome {
    let checks = tail_domination_checks(100_000, 1_000_000, DEFAULT_VERIFY_SEED).expect("tails");
    let mut names: Vec<&str> = checks.iter().map(|c| c.name.as_str()).collect();
    names.dedup();
    let enough = names
        .iter()
        .all(|n| checks.iter().filter(|c| c.name == *n).count() >= 3);
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| format!("{} {}", c.name, c.params)).collect();
    let tight = checks.iter().map(|c| c.upper99 / c.bound).fold(0.0, f64::max);
    outcome(
        failed.is_empty() && enough && names.len() == 5,
        format!("{} checks over {} bounds, largest upper99/bound {tight:.3}; failed {failed:?}", checks.len(), names.len()),
    )
}

fn c12_determinism() -> Outcome {
    let base = |model, p: Vec<f64>, score| SweepConfig {
        model,
        score,
        grid: Grid { n: vec![7], m: vec![2, 3, 4], p, rho: vec![0.4, 0.9] },
        trials_per_point: 12,
        delta: 0.5,
        master_seed: 12,
        budget: None,
        parallelism: Some(1),
        penalty: None,
    };
    let mut same = true;
    for cfg in [
        base(ModelKind::ErdosRenyi, vec![0.3, 0.5], None),
        base(ModelKind::GaussianWigner, vec![], None),
        base(ModelKind::GaussianWigner, vec![], Some(ScoreKind::MleGauss)),
    ] {
        let csv = |jobs| {
            let c = SweepConfig { parallelism: Some(jobs), ..cfg.clone() };
            emit_to_string(&sweep(&c).expect("sweep"), OutputFormat::Csv).expect("csv")
        };
        let one = csv(1);
        same &= [2, 3, 8].iter().all(|&j| csv(j) == one);
    }
    outcome(same, "ER, Gaussian and MLE sweeps at --jobs 1, 2, 3, 8")
}

fn main() {
    let criteria: [(usize, Option<u64>, fn() -> Outcome); 12] = [
        (1, Some(5), c1_er_oracle),
        (2, Some(60), c2_gaussian_mc),
        (3, None, c3_kappa_chain),
        (4, None, c4_digraph),
        (5, None, c5_counting),
        (6, None, c6_bnb_vs_brute),
        (7, Some(10), c7_rho_one),
        (8, Some(600), c8_phase),
        (9, None, c9_inequalities),
        (10, None, c10_fano),
        (11, None, c11_tails),
        (12, None, c12_determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, limit, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let (o, el) = timed(limit.map(Duration::from_secs), f);
        let status = match (o.pass, KNOWN_FAILURES.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>2}: {status:<12} [{:>7.2}s] {}", el.as_secs_f64(), o.detail);
        if !o.pass {
            failed.push(id);
        }
    }
    let expected: Vec<usize> =
        KNOWN_FAILURES.iter().copied().filter(|k| only.is_empty() || only.contains(k)).collect();
    if failed != expected {
        eprintln!("failing criteria {failed:?}, expected {expected:?}");
        std::process::exit(1);
    }
}
