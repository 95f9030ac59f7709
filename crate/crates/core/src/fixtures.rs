//! Built-in toy instances backing `mpg verify` and the test suites.
//!
//! The tables are hand-set so that density ratios vary enough to exercise
//! the samplers while keeping rejection-sampling acceptance rates practical
//! for large sample counts.

use crate::model::{ToyModel, Vocabulary};
use crate::scoring::PreferenceWeights;

/// Vocabulary for the verification instance: four regular tokens plus eos.
pub fn verification_vocab() -> Vocabulary {
    Vocabulary::with_labels(
        5,
        4,
        Some(vec![
            "a".into(),
            "b".into(),
            "c".into(),
            "d".into(),
            "</s>".into(),
        ]),
    )
    .expect("static vocabulary")
}

/// Bigram reference model over [`verification_vocab`]. All transitions have
/// positive probability.
pub fn verification_reference() -> ToyModel {
    ToyModel::bigram(
        verification_vocab(),
        &[0.35, 0.25, 0.20, 0.15, 0.05],
        &[
            vec![0.30, 0.30, 0.20, 0.10, 0.10],
            vec![0.20, 0.35, 0.25, 0.10, 0.10],
            vec![0.25, 0.20, 0.30, 0.15, 0.10],
            vec![0.15, 0.25, 0.25, 0.25, 0.10],
            vec![0.20, 0.20, 0.20, 0.20, 0.20],
        ],
    )
    .expect("static table")
    .with_label("ref")
}

/// First preference model: tilted toward the early tokens.
pub fn verification_pref_a() -> ToyModel {
    ToyModel::bigram(
        verification_vocab(),
        &[0.45, 0.30, 0.10, 0.10, 0.05],
        &[
            vec![0.40, 0.30, 0.15, 0.10, 0.05],
            vec![0.30, 0.40, 0.15, 0.10, 0.05],
            vec![0.30, 0.25, 0.25, 0.10, 0.10],
            vec![0.25, 0.30, 0.20, 0.15, 0.10],
            vec![0.20, 0.20, 0.20, 0.20, 0.20],
        ],
    )
    .expect("static table")
    .with_label("pref-a")
}

/// Second preference model: tilted toward the late tokens and earlier eos.
pub fn verification_pref_b() -> ToyModel {
    ToyModel::bigram(
        verification_vocab(),
        &[0.15, 0.15, 0.30, 0.25, 0.15],
        &[
            vec![0.15, 0.20, 0.30, 0.20, 0.15],
            vec![0.10, 0.20, 0.35, 0.20, 0.15],
            vec![0.15, 0.15, 0.35, 0.25, 0.10],
            vec![0.10, 0.15, 0.30, 0.30, 0.15],
            vec![0.20, 0.20, 0.20, 0.20, 0.20],
        ],
    )
    .expect("static table")
    .with_label("pref-b")
}

/// The weight vector used across the verification suites.
pub fn verification_weights() -> PreferenceWeights {
    PreferenceWeights::new(vec![0.6, 0.4]).expect("static weights")
}

/// Identity-reduction instance: a bigram reference on a 4-token vocabulary
/// (eos = 3) and two preference models with identical tables.
pub fn identity_models() -> (ToyModel, ToyModel, ToyModel) {
    let vocab = Vocabulary::new(4, 3).expect("static vocabulary");
    let start = [0.40, 0.30, 0.20, 0.10];
    let rows = [
        vec![0.25, 0.35, 0.25, 0.15],
        vec![0.30, 0.20, 0.35, 0.15],
        vec![0.35, 0.25, 0.20, 0.20],
        vec![0.25, 0.25, 0.25, 0.25],
    ];
    let build = |label: &str| {
        ToyModel::bigram(vocab.clone(), &start, &rows)
            .expect("static table")
            .with_label(label)
    };
    (build("ref"), build("pref-a"), build("pref-b"))
}

/// Trait-suppression instance for the signed-weight clamp: the second
/// preference model strictly dominates the first on token 1, so weights
/// [1, -1] clamp that token's reward to zero.
pub fn clamp_models() -> (ToyModel, ToyModel, ToyModel) {
    let vocab = Vocabulary::new(3, 2).expect("static vocabulary");
    let reference = ToyModel::uniform(vocab.clone()).with_label("ref");
    let d1 = ToyModel::unigram(vocab.clone(), &[0.50, 0.30, 0.20])
        .expect("static table")
        .with_label("pref-a");
    let d2 = ToyModel::unigram(vocab, &[0.20, 0.50, 0.30])
        .expect("static table")
        .with_label("pref-b");
    (reference, d1, d2)
}
