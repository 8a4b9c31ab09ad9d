use std::collections::HashMap;

use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::factorial::ln_binomial;

use labeldp::em::{
    apply_em, apply_em_with, apply_rr, em_rr_equivalence_check, exhaustive_output_distribution, flip_probability,
    sample_score, score_distribution, verify_dp, RrParams,
};
use labeldp::rng::stream;
use labeldp::{LabelVector, PrivacyParams};

fn params(e: f64) -> PrivacyParams {
    PrivacyParams::with_epsilon(e).unwrap()
}

/// Pearson statistic after merging neighbouring cells until every expected
/// count reaches 5; returns the upper-tail p-value.
fn chi2_pvalue(observed: &[f64], expected: &[f64]) -> f64 {
    let (mut cells, mut o, mut e) = (Vec::new(), 0.0, 0.0);
    for (oi, ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 {
        let last = cells.last_mut().unwrap();
        last.0 += o;
        last.1 += e;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = (cells.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

#[test]
fn closed_form_agreement_up_to_a_thousand() {
    for n in [1usize, 2, 10, 57, 100, 333, 1000] {
        for e in [0.1, 0.5, 1.0, 1.5, 3.0, 5.0, 7.0] {
            let p = params(e);
            let a = p.score_rate();
            let d = score_distribution(n, &p).unwrap();
            // ln((1 + e^a)^n), computed independently of the library
            let ln_norm = n as f64 * (a + (-a).exp().ln_1p());
            for q in 0..=n {
                let closed = (ln_binomial(n as u64, q as u64) + q as f64 * a - ln_norm).exp();
                assert!((d.prob(q) - closed).abs() <= 1e-12, "n={n} eps={e} q={q}");
            }
        }
    }
}

#[test]
fn normalization_up_to_ten_thousand() {
    for n in (1..=10_000usize).step_by(97).chain([10_000]) {
        for e in [0.1, 0.5, 1.0, 1.5, 3.0, 5.0, 7.0] {
            let d = score_distribution(n, &params(e)).unwrap();
            assert!(d.log_sum_exp().abs() <= 1e-10, "n={n} eps={e}");
            assert!(d.log_probs().iter().all(|x| x.is_finite()));
        }
    }
}

#[test]
fn normalization_at_a_million() {
    for e in [0.1, 1.5, 7.0] {
        let d = score_distribution(1_000_000, &params(e)).unwrap();
        assert!(d.log_sum_exp().abs() <= 1e-10, "eps={e}: {}", d.log_sum_exp());
    }
}

#[test]
fn hand_values() {
    let d = score_distribution(2, &params(2.0 * 3f64.ln())).unwrap();
    for (q, want) in [(0, 1.0 / 16.0), (1, 6.0 / 16.0), (2, 9.0 / 16.0)] {
        assert!((d.prob(q) - want).abs() < 1e-15);
    }
    let d = score_distribution(100, &params(1.5)).unwrap();
    assert!((d.mean() / 100.0 - (1.0 - 0.321)).abs() <= 0.001);
    let p = flip_probability(&params(1.5)).flip_probability();
    let d1 = score_distribution(1, &params(1.5)).unwrap();
    assert!((d1.prob(1) - (1.0 - p)).abs() < 1e-15);
}

#[test]
fn sampler_passes_goodness_of_fit() {
    let d = score_distribution(100, &params(1.5)).unwrap();
    let mut rng = stream(2024, "chi2-score", 0);
    let draws = 100_000;
    let mut counts = vec![0.0; 101];
    for _ in 0..draws {
        counts[sample_score(&d, &mut rng)] += 1.0;
    }
    let expected: Vec<f64> = (0..=100).map(|q| d.prob(q) * draws as f64).collect();
    let pv = chi2_pvalue(&counts, &expected);
    assert!(pv > 0.001, "p-value {pv}");
}

#[test]
fn degenerate_score_distribution() {
    let d = score_distribution(30, &params(1e4)).unwrap();
    let mut rng = stream(1, "deg", 0);
    for _ in 0..100 {
        assert_eq!(sample_score(&d, &mut rng), 30);
    }
    let input = LabelVector::new(vec![1, -1, 1, 1]).unwrap();
    let rec = apply_em(&input, &params(1e4), 5);
    assert_eq!(rec.output, input);
    assert_eq!(rec.score, 4);
}

#[test]
fn flipped_subsets_are_uniform_given_the_score() {
    let n = 6;
    let input = LabelVector::new(vec![1; n]).unwrap();
    let p = params(0.3);
    let mut rng = stream(7, "subset", 0);
    let mut groups: HashMap<usize, HashMap<Vec<i8>, f64>> = HashMap::new();
    for _ in 0..100_000 {
        let (q, out) = apply_em_with(&input, &p, &mut rng);
        *groups.entry(q).or_default().entry(out.as_slice().to_vec()).or_default() += 1.0;
    }
    // combined statistic over the score groups
    let (mut stat, mut df) = (0.0, 0.0);
    for (q, cells) in &groups {
        let k = n - q;
        let subsets = (ln_binomial(n as u64, k as u64).exp()).round() as usize;
        if subsets < 2 {
            continue;
        }
        let total: f64 = cells.values().sum();
        let e = total / subsets as f64;
        assert!(e >= 5.0);
        assert!(cells.len() <= subsets);
        let seen: f64 = cells.values().map(|o| (o - e) * (o - e) / e).sum();
        stat += seen + (subsets - cells.len()) as f64 * e;
        df += (subsets - 1) as f64;
    }
    let pv = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
    assert!(pv > 0.001, "p-value {pv}");
}

#[test]
fn sampled_outputs_match_enumeration() {
    let input = LabelVector::new(vec![1, -1, 1]).unwrap();
    let p = params(1.0);
    let exact = exhaustive_output_distribution(&input, &p).unwrap();
    let mut counts: HashMap<Vec<i8>, f64> = HashMap::new();
    let runs = 40_000u64;
    for seed in 0..runs {
        *counts.entry(apply_em(&input, &p, seed).output.as_slice().to_vec()).or_default() += 1.0;
    }
    let (mut obs, mut exp) = (Vec::new(), Vec::new());
    for (out, prob) in exact.iter() {
        obs.push(counts.get(out.as_slice()).copied().unwrap_or(0.0));
        exp.push(prob * runs as f64);
    }
    assert!(chi2_pvalue(&obs, &exp) > 0.001);
}

#[test]
fn large_release_flip_rate() {
    let input = LabelVector::new((0..10_000).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect()).unwrap();
    let p = params(1.5);
    let mut rng = stream(11, "flip-rate", 0);
    let runs = 1000;
    let mean: f64 = (0..runs)
        .map(|_| {
            let (q, _) = apply_em_with(&input, &p, &mut rng);
            (10_000 - q) as f64 / 10_000.0
        })
        .sum::<f64>()
        / runs as f64;
    assert!((mean - 0.321).abs() <= 0.01, "{mean}");
}

#[test]
fn randomized_response_rates() {
    let input = LabelVector::new(vec![1; 100_000]).unwrap();
    let mut rng = stream(3, "rr", 0);
    let out = apply_rr(&input, &RrParams::new(0.321).unwrap(), &mut rng);
    let rate = out.hamming(&input) as f64 / 1e5;
    assert!((rate - 0.321).abs() <= 0.005, "{rate}");
    let small = LabelVector::new(vec![1, -1, -1]).unwrap();
    assert_eq!(apply_rr(&small, &RrParams::new(0.0).unwrap(), &mut rng), small);
    assert_eq!(apply_rr(&small, &RrParams::new(1.0).unwrap(), &mut rng), small.negated());
}

#[test]
fn enumeration_hand_values() {
    let p = params(2.0 * 3f64.ln());
    let one = exhaustive_output_distribution(&LabelVector::new(vec![1]).unwrap(), &p).unwrap();
    assert!((one.get(&LabelVector::new(vec![1]).unwrap()) - 0.75).abs() < 1e-15);
    assert!((one.get(&LabelVector::new(vec![-1]).unwrap()) - 0.25).abs() < 1e-15);
    let input = LabelVector::new(vec![1, 1]).unwrap();
    let two = exhaustive_output_distribution(&input, &p).unwrap();
    for (out, prob) in two.iter() {
        let want = [9.0 / 16.0, 3.0 / 16.0, 1.0 / 16.0][out.hamming(&input)];
        assert!((prob - want).abs() < 1e-15);
    }
    assert!((two.total() - 1.0).abs() < 1e-12);
}

#[test]
fn dp_ratio_is_half_the_budget() {
    for e in [0.1, 1.0, 5.0] {
        for n in 1..=6 {
            let r = verify_dp(n, &params(e)).unwrap();
            assert!(r <= e.exp());
            assert!((r - (e / 2.0).exp()).abs() <= 1e-9, "n={n} eps={e}: {r}");
        }
    }
    assert!((verify_dp(4, &params(0.0)).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn em_matches_rr_exactly() {
    for e in [0.5, 1.5, 3.0] {
        for n in 1..=10 {
            assert!(em_rr_equivalence_check(n, &params(e)).unwrap() <= 1e-12, "n={n} eps={e}");
        }
    }
}

#[test]
fn records_are_byte_identical() {
    let input = LabelVector::new((0..500).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect()).unwrap();
    let a = serde_json::to_string(&apply_em(&input, &params(0.8), 99)).unwrap();
    let b = serde_json::to_string(&apply_em(&input, &params(0.8), 99)).unwrap();
    assert_eq!(a, b);
}

fn label_vector(max: usize) -> impl Strategy<Value = LabelVector> {
    prop::collection::vec(prop::bool::ANY, 1..=max)
        .prop_map(|v| LabelVector::new(v.into_iter().map(|b| if b { 1 } else { -1 }).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn record_distance_matches_flip_count(input in label_vector(200), e in 0.0f64..8.0, seed in any::<u64>()) {
        let rec = apply_em(&input, &params(e), seed);
        prop_assert_eq!(rec.output.hamming(&input), rec.flip_count);
        prop_assert_eq!(rec.flip_count + rec.score, input.len());
    }

    #[test]
    fn flip_probability_at_most_half(e in 0.0f64..50.0, delta in 0.1f64..10.0) {
        let p = flip_probability(&PrivacyParams::new(e, delta).unwrap()).flip_probability();
        prop_assert!((0.0..=0.5).contains(&p));
        prop_assert!((p - 1.0 / (1.0 + (e / (2.0 * delta)).exp())).abs() < 1e-15);
    }

    #[test]
    fn dp_bound_for_any_budget(n in 1usize..=6, e in 0.0f64..6.0) {
        prop_assert!(verify_dp(n, &params(e)).unwrap() <= e.exp() * (1.0 + 1e-12));
    }

    #[test]
    fn em_rr_identity_for_any_budget(n in 1usize..=10, e in 0.0f64..8.0, delta in 0.5f64..4.0) {
        let p = PrivacyParams::new(e, delta).unwrap();
        prop_assert!(em_rr_equivalence_check(n, &p).unwrap() <= 1e-12);
    }

    #[test]
    fn enumeration_normalized(input in label_vector(12), e in 0.0f64..10.0) {
        let d = exhaustive_output_distribution(&input, &params(e)).unwrap();
        prop_assert!((d.total() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn guards() {
    assert!(exhaustive_output_distribution(&LabelVector::new(vec![1; 21]).unwrap(), &params(1.0)).is_err());
    assert!(verify_dp(11, &params(1.0)).is_err());
    assert!(em_rr_equivalence_check(11, &params(1.0)).is_err());
}
