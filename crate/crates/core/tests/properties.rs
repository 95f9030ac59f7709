//! Property tests over the scoring, sampling, and oracle layers.

mod common;

use proptest::prelude::*;

use mpg_core::math::logsumexp;
use mpg_core::model::{
    nucleus_distribution, propose_chunk, sample_token, LanguageModel, LogProbVector,
    SamplingConfig, ToyModel, Vocabulary,
};
use mpg_core::oracle::{empirical_distribution, tv_distance};
use mpg_core::scoring::{accept_test, aggregate_log_score, chunk_log_ratio, PreferenceWeights};
use mpg_core::TokenSequence;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn weight_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    // Scaling every weight by c > 0 shifts the aggregated log score by
    // exactly ln(c), and acceptance decisions survive when the bound shifts
    // along.
    #[test]
    fn weight_scaling_shifts_score_by_ln_c(
        alphas in weight_vec(),
        c in 0.01f64..100.0,
        seed in any::<u64>(),
    ) {
        let n = alphas.len();
        let mut rng = StdRng::seed_from_u64(seed);
        let ratios: Vec<f64> = (0..n).map(|_| {
            use rand::Rng;
            rng.random_range(-30.0..30.0)
        }).collect();
        let w = PreferenceWeights::new(alphas.clone()).unwrap();
        let scaled = PreferenceWeights::new(alphas.iter().map(|a| a * c).collect()).unwrap();
        let s = aggregate_log_score(&w, &ratios).unwrap();
        let s_scaled = aggregate_log_score(&scaled, &ratios).unwrap();
        prop_assert!((s_scaled - (s + c.ln())).abs() < 1e-9);

        use rand::Rng;
        let log_m = rng.random_range(-5.0..5.0);
        let u: f64 = rng.random_range(1e-9..1.0);
        // Skip draws that land on the decision boundary within fp noise.
        if (u.ln() - (s - log_m)).abs() > 1e-9 {
            let before = accept_test(s, log_m, u);
            let after = accept_test(s_scaled, log_m + c.ln(), u);
            prop_assert_eq!(before, after);
        }
    }

    // The nucleus is the minimal probability-sorted prefix reaching top_p.
    #[test]
    fn nucleus_is_minimal_mass_prefix(
        raw in prop::collection::vec(0.0f64..1.0, 2..9),
        top_p in 0.05f64..1.0,
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-9);
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let dist = LogProbVector::renormalized(
            probs.iter().map(|p| if *p > 0.0 { p.ln() } else { f64::NEG_INFINITY }).collect(),
        ).unwrap();
        let cfg = SamplingConfig { temperature: 1.0, top_p, seed: 0 };
        let nucleus = nucleus_distribution(&dist, &cfg).unwrap();

        // Reference route: sort (prob desc, index asc) and accumulate.
        let mut order: Vec<(usize, f64)> = dist.values().iter().enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| (i, v.exp()))
            .collect();
        order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut expect = Vec::new();
        let mut cum = 0.0;
        for (i, p) in order {
            expect.push(i as u32);
            cum += p;
            if cum >= top_p {
                break;
            }
        }
        let got: Vec<u32> = nucleus.iter().map(|&(t, _)| t).collect();
        prop_assert_eq!(got, expect);
        // Retained mass renormalizes to one.
        let mass: f64 = nucleus.iter().map(|&(_, p)| p).sum();
        prop_assert!((mass - 1.0).abs() < 1e-9);
    }

    // Prefix consistency: the ratio over a prefix is the partial sum of the
    // same per-token differences.
    #[test]
    fn chunk_log_ratio_prefixes_are_partial_sums(
        pairs in prop::collection::vec((-8.0f64..-0.01, -8.0f64..-0.01), 1..6),
    ) {
        let pref: Vec<f64> = pairs.iter().map(|(p, _)| *p).collect();
        let reference: Vec<f64> = pairs.iter().map(|(_, r)| *r).collect();
        let mut partial = 0.0;
        for j in 1..=pairs.len() {
            partial += pref[j - 1] - reference[j - 1];
            let direct = chunk_log_ratio(&pref[..j], &reference[..j]).unwrap();
            prop_assert_eq!(direct, partial);
        }
    }

    // TV distance is a metric on distributions over the union support.
    #[test]
    fn tv_distance_is_a_metric(seed in any::<u64>()) {
        let vocab = Vocabulary::new(4, 3).unwrap();
        let mut rng = StdRng::seed_from_u64(seed);
        let mut sample = |s: u64| {
            use rand::Rng;
            let n = 200 + (rng.random::<u32>() % 100) as usize;
            let model = ToyModel::uniform(vocab.clone());
            let cfg = SamplingConfig { temperature: 1.0, top_p: 1.0, seed: s };
            let mut r = StdRng::seed_from_u64(s);
            let samples: Vec<TokenSequence> = (0..n)
                .map(|_| {
                    let dist = model.logprobs(&[]).unwrap();
                    TokenSequence::from_tokens(vec![sample_token(&dist, &cfg, &mut r).unwrap()])
                })
                .collect();
            empirical_distribution(&samples).unwrap()
        };
        let p = sample(1);
        let q = sample(2);
        let r = sample(3);
        prop_assert!(tv_distance(&p, &p).abs() < 1e-12);
        prop_assert!((tv_distance(&p, &q) - tv_distance(&q, &p)).abs() < 1e-12);
        prop_assert!(tv_distance(&p, &r) <= tv_distance(&p, &q) + tv_distance(&q, &r) + 1e-12);
    }
}

#[test]
fn model_distributions_always_normalize() {
    let vocab = Vocabulary::new(5, 4).unwrap();
    let models: Vec<ToyModel> = vec![
        ToyModel::uniform(vocab.clone()),
        ToyModel::unigram(vocab.clone(), &[0.5, 0.25, 0.15, 0.1, 0.0]).unwrap(),
        mpg_core::fixtures::verification_reference(),
    ];
    for model in &models {
        use mpg_core::model::LanguageModel;
        for ctx in common::all_contexts(model.vocab(), 2) {
            let dist = model.logprobs(&ctx).unwrap();
            assert!(logsumexp(dist.values()).abs() <= 1e-9);
        }
    }
}

#[test]
fn proposals_cache_raw_logprobs_whatever_the_sampling() {
    use mpg_core::model::LanguageModel;
    let reference = mpg_core::fixtures::verification_reference();
    for (temp, top_p, seed) in [
        (0.3, 0.5, 1u64),
        (0.7, 0.9, 2),
        (1.4, 1.0, 3),
        (1.0, 0.2, 4),
    ] {
        let cfg = SamplingConfig {
            temperature: temp,
            top_p,
            seed,
        };
        let mut rng = StdRng::seed_from_u64(seed);
        let chunk = propose_chunk(&reference, &[0], 4, &cfg, &mut rng).unwrap();
        let raw = reference.score_continuation(&[0], &chunk.tokens).unwrap();
        for (cached, direct) in chunk.ref_logprobs.iter().zip(&raw) {
            assert_eq!(cached, direct);
        }
    }
}
