use palign_core::align::{injection_count, max_k_pairing};
use palign_core::cumulant::{
    brute_force_er_component_mgf, chain_upper_bound, component_mgf, kappa, CumulantQuery,
};
use palign_core::digraph::{disagreement, disagreement_edges, restricted_decomposition};
use palign_core::harness::{fmt_real, read_csv_rows, emit_to_string, wilson_interval, OutputFormat, SummaryRow, Z95};
use palign_core::model::sample_truth;
use palign_core::model::rng_from_seed;
use palign_core::thresholds::{fano_failure_lower_bound, kl_pair_bound, n_k, phi};
use palign_core::{
    branch_and_bound_align, brute_force_align, distance, overlap, sample_instance, ComponentKind, ComponentShape,
    InjectiveMapping, ModelKind, ModelParams, ScoreKind, DEFAULT_BUDGET,
};
use proptest::prelude::*;

fn mapping_strategy(n: usize) -> impl Strategy<Value = InjectiveMapping> {
    (0..=n, any::<u64>()).prop_map(move |(m, seed)| sample_truth(n, m, &mut rng_from_seed(seed)).unwrap())
}

fn er_params() -> impl Strategy<Value = (f64, f64)> {
    (0.05f64..0.95, 0.0f64..1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_instances_are_valid_and_reproducible(
        n in 1usize..9, mfrac in 0.0f64..=1.0, rho in 0.0f64..=1.0, er in any::<bool>(), seed in any::<u64>()
    ) {
        let m = ((n as f64) * mfrac).round() as usize;
        let params = if er { ModelParams::er(n, m, 0.3, rho) } else { ModelParams::gaussian(n, m, rho) };
        let a = sample_instance(&params, seed).unwrap();
        prop_assert_eq!(a.truth.len(), m);
        a.truth.check_bounds(n, n).unwrap();
        a.g1.validate().unwrap();
        a.g2.validate().unwrap();
        prop_assert_eq!(&sample_instance(&params, seed).unwrap(), &a);
        if !er && rho == 1.0 {
            for &(u, pu) in a.truth.pairs() {
                for &(v, pv) in a.truth.pairs() {
                    if u != v {
                        prop_assert_eq!(a.g1.get(u, v), a.g2.get(pu, pv));
                    }
                }
            }
        }
    }

    #[test]
    fn overlap_and_distance_are_consistent(truth in mapping_strategy(7), pi in mapping_strategy(7)) {
        prop_assume!(truth.len() == pi.len() && !truth.is_empty());
        let o = overlap(&truth, &pi).unwrap();
        let d = distance(&pi, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&o));
        prop_assert_eq!(d, distance(&truth, &pi).unwrap());
        prop_assert!((o - (1.0 - d as f64 / truth.len() as f64)).abs() < 1e-12);
        prop_assert_eq!(d == 0, pi == truth);
    }

    #[test]
    fn decomposition_partitions_disagreement(truth in mapping_strategy(7), pi in mapping_strategy(7)) {
        prop_assume!(truth.len() == pi.len());
        let dec = restricted_decomposition(&pi, &truth).unwrap();
        let k = disagreement(&pi, &truth).unwrap();
        let mut covered: Vec<_> = dec.components.iter().flat_map(|c| c.edges.clone()).collect();
        covered.sort_unstable();
        let mut want = disagreement_edges(&pi, &truth);
        want.sort_unstable();
        prop_assert_eq!(&covered, &want);
        prop_assert_eq!(dec.total_edges, n_k(pi.len() as u64, k as u64).unwrap() as usize);
        prop_assert!(dec.self_loop_count <= k / 2);
        prop_assert_eq!(dec.self_loop_count, dec.components.iter().filter(|c| c.is_self_loop()).count());
    }

    #[test]
    fn component_cumulants_respect_the_chain_bound(
        truth in mapping_strategy(7), pi in mapping_strategy(7), (p, rho) in er_params(), t in 0.01f64..2.0
    ) {
        prop_assume!(truth.len() == pi.len());
        let dec = restricted_decomposition(&pi, &truth).unwrap();
        let q = CumulantQuery::er(p, rho, t, 1);
        let mut total = 0.0;
        for c in &dec.components {
            let shape = match c.kind { ComponentKind::Path => ComponentShape::Path, ComponentKind::Cycle => ComponentShape::Cycle };
            total += kappa(&q.with_ell(c.edges.len()), shape).unwrap();
        }
        let bound = chain_upper_bound(dec.total_edges, dec.self_loop_count, &q).unwrap();
        prop_assert!(total <= bound + 1e-12 * bound.abs().max(1.0), "{} > {}", total, bound);
    }

    #[test]
    fn er_closed_form_matches_enumeration((p, rho) in er_params(), t in 0.01f64..1.5, ell in 1usize..7) {
        for shape in [ComponentShape::Path, ComponentShape::Cycle] {
            let cf = component_mgf(&CumulantQuery::er(p, rho, t, ell), shape).unwrap();
            let bf = brute_force_er_component_mgf(p, rho, t, ell, shape).unwrap();
            prop_assert!((cf - bf).abs() <= 1e-11 * bf, "{:?}: {} vs {}", shape, cf, bf);
        }
    }

    #[test]
    fn branch_and_bound_matches_brute_force(
        n in 1usize..6, mfrac in 0.0f64..=1.0, rho in 0.0f64..0.99, model in 0usize..4, seed in any::<u64>()
    ) {
        let m = ((n as f64) * mfrac).round() as usize;
        let (params, score) = match model {
            0 => (ModelParams::er(n, m, 0.4, rho), ScoreKind::Product),
            1 => (ModelParams::gaussian(n, m, rho), ScoreKind::Product),
            2 => (ModelParams::gaussian(n, m, rho), ScoreKind::NegHalfSquaredDiff),
            _ => (ModelParams::gaussian(n, m, rho), ScoreKind::MleGauss),
        };
        let inst = sample_instance(&params, seed).unwrap();
        let budget = injection_count(n, n, m);
        // the node cap of branch and bound is not an injection count
        let a = branch_and_bound_align(&inst.g1, &inst.g2, m, score, Some(rho), DEFAULT_BUDGET).unwrap();
        let b = brute_force_align(&inst.g1, &inst.g2, m, score, Some(rho), budget).unwrap();
        prop_assert_eq!(&a.mapping, &b.mapping);
        prop_assert_eq!(a.score.to_bits(), b.score.to_bits());
    }

    #[test]
    fn max_k_pairing_matches_enumeration(
        mut a in prop::collection::vec(-3i32..4, 0..6), mut b in prop::collection::vec(-3i32..4, 0..6), k in 0usize..6
    ) {
        let k = k.min(a.len()).min(b.len());
        a.sort_unstable_by(|x, y| y.cmp(x));
        b.sort_unstable_by(|x, y| y.cmp(x));
        let af: Vec<f64> = a.iter().map(|&x| x as f64 * 0.5).collect();
        let bf: Vec<f64> = b.iter().map(|&x| x as f64 * 0.25).collect();
        // every injection of k elements of `a` into `b`
        let mut best = f64::NEG_INFINITY;
        palign_core::align::for_each_injection(af.len(), bf.len(), k, |pairs| {
            best = best.max(pairs.iter().map(|&(i, j)| af[i] * bf[j]).sum());
        });
        prop_assert_eq!(max_k_pairing(&af, &bf, k), best);
    }

    #[test]
    fn wilson_interval_brackets_the_rate(s in 0usize..500, extra in 0usize..500) {
        let n = s + extra;
        let (lo, hi) = wilson_interval(s, n, Z95);
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi);
        if n > 0 {
            let r = s as f64 / n as f64;
            prop_assert!(lo <= r + 1e-15 && r <= hi + 1e-15);
        }
    }

    #[test]
    fn fano_bound_is_eventually_nonincreasing_in_m((p, rho) in (0.05f64..0.5, 0.01f64..0.99), logn in 4.0f64..20.0) {
        // (C(m,2) K + ln 2) / (delta m L) decreases in m until m^2 K >= 2 ln 2,
        // so the bound is monotone only from there on
        let n = logn.exp();
        let kl = kl_pair_bound(ModelKind::ErdosRenyi, p, rho).unwrap().bound.unwrap();
        let m0 = (2.0 * 2f64.ln() / kl).sqrt().ceil().max(1.0) as usize;
        let mut prev = f64::INFINITY;
        for m in m0..m0 + 40 {
            let b = fano_failure_lower_bound(ModelKind::ErdosRenyi, n, m as f64, p, rho, 0.5).unwrap();
            prop_assert!((0.0..=1.0).contains(&b));
            prop_assert!(b <= prev + 1e-12, "m = {}: {} > {}", m, b, prev);
            prev = b;
        }
    }

    #[test]
    fn n_k_closed_form(m in 1u64..200, kfrac in 0.0f64..=1.0) {
        let k = ((m as f64) * kfrac).round() as u64;
        let nk = n_k(m, k).unwrap();
        prop_assert_eq!(2 * nk, 2 * m * k - k * (k + 1));
        prop_assert_eq!(nk, m * (m - 1) / 2 - (m - k) * (m - k).saturating_sub(1) / 2);
    }

    #[test]
    fn phi_is_nonnegative_and_increasing(g in 0.0f64..50.0, dg in 1e-6f64..1.0) {
        let (a, b) = (phi(g).unwrap(), phi(g + dg).unwrap());
        prop_assert!(a >= 0.0 && b > a);
    }

    #[test]
    fn reals_roundtrip_through_the_csv_format(x in any::<f64>()) {
        prop_assume!(x.is_finite());
        prop_assert_eq!(fmt_real(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn csv_roundtrip(rows in prop::collection::vec(summary_row(), 0..5)) {
        let text = emit_to_string(&rows, OutputFormat::Csv).unwrap();
        prop_assert_eq!(read_csv_rows(&text).unwrap(), rows);
    }
}

fn unit() -> impl Strategy<Value = f64> {
    0.0f64..=1.0
}

fn summary_row() -> impl Strategy<Value = SummaryRow> {
    (
        (0usize..100, any::<bool>(), 1usize..50, 0usize..50, prop::option::of(unit()), unit(), 0usize..300),
        (unit(), unit(), unit(), unit(), unit(), unit(), unit()),
        (prop::option::of(0.0f64..1e9), prop::option::of(0.0f64..10.0), "[ -~]{0,12}"),
    )
        .prop_map(|((id, er, n, m, p, rho, trials), (pr, pl, ph, er_, el, eh, mo), (th, tr, note))| SummaryRow {
            point_id: id,
            model: if er { ModelKind::ErdosRenyi } else { ModelKind::GaussianWigner },
            score: if er { ScoreKind::Product } else { ScoreKind::NegHalfSquaredDiff },
            n,
            m,
            p,
            rho,
            delta: 0.5,
            trials,
            skipped: 0,
            partial_successes: trials / 2,
            partial_rate: pr,
            partial_lo: pl,
            partial_hi: ph,
            exact_successes: trials / 3,
            exact_rate: er_,
            exact_lo: el,
            exact_hi: eh,
            mean_overlap: mo,
            threshold: th,
            threshold_ratio: tr,
            note,
        })
}
