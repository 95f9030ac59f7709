//! Token-level language-model interface, toy table models, and proposal
//! sampling.
//!
//! Every model exposes two evaluations: `logprobs` (the next-token
//! distribution for a context) and `score_continuation` (teacher-forced
//! per-position log-probabilities of a fixed continuation). Both feed the
//! density-ratio machinery; the forward-pass accounting contract is that a
//! `logprobs` call costs one pass and a whole `score_continuation` call costs
//! one pass, mirroring batched chunk scoring on a real backend.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::logsumexp;

/// Token identifier; always interpreted against a [`Vocabulary`].
pub type Token = u32;

/// Tolerance for the `logsumexp == 0` normalization invariant.
pub const NORMALIZATION_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Vocabulary and sequences
// ---------------------------------------------------------------------------

/// A finite token alphabet with a designated end-of-sequence token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    size: u32,
    eos: Token,
    labels: Option<Vec<String>>,
}

impl Vocabulary {
    pub fn new(size: u32, eos: Token) -> Result<Self> {
        Self::with_labels(size, eos, None)
    }

    pub fn with_labels(size: u32, eos: Token, labels: Option<Vec<String>>) -> Result<Self> {
        if size < 2 {
            return Err(Error::Input(format!("vocabulary size {size} < 2")));
        }
        if eos >= size {
            return Err(Error::Input(format!(
                "eos {eos} out of range for size {size}"
            )));
        }
        if let Some(l) = &labels {
            if l.len() != size as usize {
                return Err(Error::Input(format!(
                    "{} labels for vocabulary of size {size}",
                    l.len()
                )));
            }
        }
        Ok(Self { size, eos, labels })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn eos(&self) -> Token {
        self.eos
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn contains(&self, token: Token) -> bool {
        token < self.size
    }

    /// Two vocabularies are interchangeable for decoding when size and eos
    /// agree; display labels are not part of the contract.
    pub fn compatible(&self, other: &Vocabulary) -> bool {
        self.size == other.size && self.eos == other.eos
    }

    /// Check that `tokens` is a valid (sub)sequence: in-range, with eos at
    /// most once and only in final position.
    pub fn validate_tokens(&self, tokens: &[Token]) -> Result<()> {
        for (i, &t) in tokens.iter().enumerate() {
            if !self.contains(t) {
                return Err(Error::Input(format!(
                    "token {t} out of range (size {})",
                    self.size
                )));
            }
            if t == self.eos && i + 1 != tokens.len() {
                return Err(Error::Input("eos before final position".into()));
            }
        }
        Ok(())
    }

    /// A context is a sequence a model can be asked to continue: valid and
    /// not already terminated.
    pub fn validate_context(&self, tokens: &[Token]) -> Result<()> {
        self.validate_tokens(tokens)?;
        if tokens.last() == Some(&self.eos) {
            return Err(Error::Input("context ends with eos".into()));
        }
        Ok(())
    }
}

/// An ordered token sequence; at most one eos, and only at the end.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct TokenSequence(Vec<Token>);

impl TokenSequence {
    /// Build a sequence after validating it against `vocab`.
    pub fn checked(tokens: Vec<Token>, vocab: &Vocabulary) -> Result<Self> {
        vocab.validate_tokens(&tokens)?;
        Ok(Self(tokens))
    }

    /// Build from tokens already known to satisfy the invariants.
    pub fn from_tokens(tokens: Vec<Token>) -> Self {
        Self(tokens)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.0
    }

    pub fn ends_with_eos(&self, vocab: &Vocabulary) -> bool {
        self.0.last() == Some(&vocab.eos())
    }

    /// Render via vocabulary labels when present, else as numeric ids.
    pub fn display(&self, vocab: &Vocabulary) -> String {
        match vocab.labels() {
            Some(labels) => self
                .0
                .iter()
                .map(|&t| labels[t as usize].as_str())
                .collect::<Vec<_>>()
                .join(" "),
            None => self
                .0
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

impl From<Vec<Token>> for TokenSequence {
    fn from(tokens: Vec<Token>) -> Self {
        Self(tokens)
    }
}

// ---------------------------------------------------------------------------
// Log-probability vectors
// ---------------------------------------------------------------------------

/// A normalized next-token distribution in natural-log domain.
///
/// Invariants: `logsumexp(values) == 0` within [`NORMALIZATION_TOL`], no entry
/// positive beyond the same tolerance, `-inf` entries mark zero-probability
/// tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbVector {
    values: Vec<f64>,
}

impl LogProbVector {
    /// Validate and wrap a log-probability vector.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("empty log-probability vector".into()));
        }
        for &v in &values {
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::Input("log-probability entry is NaN or +inf".into()));
            }
            if v > NORMALIZATION_TOL {
                return Err(Error::Input(format!(
                    "log-probability entry {v} is positive"
                )));
            }
        }
        let lse = logsumexp(&values);
        if lse.abs() > NORMALIZATION_TOL {
            return Err(Error::Input(format!(
                "distribution not normalized: logsumexp = {lse}"
            )));
        }
        Ok(Self { values })
    }

    /// Shift an unnormalized vector so that `logsumexp == 0`, clamping the
    /// positive rounding dust that the shift can leave behind.
    pub fn renormalized(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("empty log-probability vector".into()));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Input("log-probability entry is NaN or +inf".into()));
        }
        let lse = logsumexp(&values);
        if lse == f64::NEG_INFINITY {
            return Err(Error::Degenerate("all entries are -inf".into()));
        }
        for v in &mut values {
            *v = (*v - lse).min(0.0);
        }
        Ok(Self { values })
    }

    /// Build from linear-domain probabilities summing to 1 (within 1e-6).
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::Input("negative or non-finite probability".into()));
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Input(format!("probabilities sum to {sum}")));
        }
        let values = probs.iter().map(|&p| (p / sum).ln()).collect();
        Ok(Self { values })
    }

    /// Internal constructor for vectors already normalized at model build
    /// time; checked in debug builds.
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        debug_assert!(logsumexp(&values).abs() <= NORMALIZATION_TOL);
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, token: Token) -> f64 {
        self.values[token as usize]
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Proposal sampling controls: temperature scaling, nucleus truncation, and
/// the seed the caller uses to build its RNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.9,
            seed: 42,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::Input(format!(
                "temperature {} must be > 0",
                self.temperature
            )));
        }
        if self.top_p.is_nan() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err(Error::Input(format!(
                "top_p {} must be in (0, 1]",
                self.top_p
            )));
        }
        Ok(())
    }

    /// The RNG a decoding run derives from this configuration.
    pub fn rng(&self) -> rand::rngs::StdRng {
        use rand::SeedableRng;
        rand::rngs::StdRng::seed_from_u64(self.seed)
    }
}

/// The temperature-scaled, nucleus-truncated proposal distribution as
/// `(token, probability)` pairs, renormalized over the retained set and
/// sorted by descending probability (ties by ascending token id).
///
/// The nucleus is the minimal probability-sorted prefix whose cumulative mass
/// reaches `top_p`; zero-probability tokens never enter it.
pub fn nucleus_distribution(
    dist: &LogProbVector,
    cfg: &SamplingConfig,
) -> Result<Vec<(Token, f64)>> {
    cfg.validate()?;
    let mut scaled: Vec<(Token, f64)> = dist
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(i, &v)| (i as Token, v / cfg.temperature))
        .collect();
    if scaled.is_empty() {
        return Err(Error::Degenerate(
            "no token has positive probability".into(),
        ));
    }
    let lse = logsumexp(&scaled.iter().map(|&(_, v)| v).collect::<Vec<_>>());
    for (_, v) in &mut scaled {
        *v = (*v - lse).exp();
    }
    scaled.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut cut = scaled.len();
    let mut cum = 0.0;
    for (i, &(_, p)) in scaled.iter().enumerate() {
        cum += p;
        if cum >= cfg.top_p {
            cut = i + 1;
            break;
        }
    }
    scaled.truncate(cut);
    let mass: f64 = scaled.iter().map(|&(_, p)| p).sum();
    for (_, p) in &mut scaled {
        *p /= mass;
    }
    Ok(scaled)
}

/// Draw one token from the temperature/top-p adjusted distribution.
pub fn sample_token(
    dist: &LogProbVector,
    cfg: &SamplingConfig,
    rng: &mut dyn RngCore,
) -> Result<Token> {
    let nucleus = nucleus_distribution(dist, cfg)?;
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for &(tok, p) in &nucleus {
        cum += p;
        if u < cum {
            return Ok(tok);
        }
    }
    // Rounding left u at the very top of the CDF.
    Ok(nucleus.last().expect("nucleus never empty").0)
}

/// A uniform draw in the open interval (0, 1), suitable for `ln(u)`.
pub fn uniform_open01(rng: &mut dyn RngCore) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

// ---------------------------------------------------------------------------
// Language-model interface
// ---------------------------------------------------------------------------

/// Abstract token-level language model.
///
/// Implementations are read-only after construction and must tolerate
/// concurrent evaluation; the forward-pass counter uses atomic accumulation.
pub trait LanguageModel: Send + Sync {
    fn vocab(&self) -> &Vocabulary;

    /// Short name used in reports and error messages.
    fn label(&self) -> &str;

    /// Normalized next-token log-distribution. Counts one forward pass.
    fn logprobs(&self, context: &[Token]) -> Result<LogProbVector>;

    /// Teacher-forced per-position log-probability of each continuation
    /// token. Counts one forward pass for the whole call (batched scoring).
    fn score_continuation(&self, context: &[Token], continuation: &[Token]) -> Result<Vec<f64>>;

    fn forward_passes(&self) -> u64;

    fn reset_forward_passes(&self);
}

// ---------------------------------------------------------------------------
// Toy models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Table {
    Uniform,
    /// One fixed distribution regardless of context.
    Unigram {
        log_row: Vec<f64>,
    },
    /// Distribution keyed on the most recent token; `start` serves the empty
    /// context.
    Bigram {
        log_start: Vec<f64>,
        log_rows: Vec<Vec<f64>>,
    },
}

/// Table-driven model over a small vocabulary. Exact probabilities make
/// density ratios and brute-force enumeration checkable to high precision.
#[derive(Debug)]
pub struct ToyModel {
    vocab: Vocabulary,
    table: Table,
    label: String,
    passes: AtomicU64,
}

fn normalize_row(row: &[f64], what: &str, size: usize) -> Result<Vec<f64>> {
    if row.len() != size {
        return Err(Error::Format(format!(
            "{what} has {} entries, expected {size}",
            row.len()
        )));
    }
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Format(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Format(format!(
            "{what} sums to {sum}, expected 1 within 1e-6"
        )));
    }
    Ok(row.iter().map(|&p| (p / sum).ln()).collect())
}

impl ToyModel {
    pub fn uniform(vocab: Vocabulary) -> Self {
        Self {
            vocab,
            table: Table::Uniform,
            label: "uniform".into(),
            passes: AtomicU64::new(0),
        }
    }

    pub fn unigram(vocab: Vocabulary, probs: &[f64]) -> Result<Self> {
        let log_row = normalize_row(probs, "unigram row", vocab.size() as usize)?;
        Ok(Self {
            vocab,
            table: Table::Unigram { log_row },
            label: "unigram".into(),
            passes: AtomicU64::new(0),
        })
    }

    pub fn bigram(vocab: Vocabulary, start: &[f64], rows: &[Vec<f64>]) -> Result<Self> {
        let size = vocab.size() as usize;
        if rows.len() != size {
            return Err(Error::Format(format!(
                "bigram table has {} rows, expected {size}",
                rows.len()
            )));
        }
        let log_start = normalize_row(start, "start row", size)?;
        let log_rows = rows
            .iter()
            .enumerate()
            .map(|(i, r)| normalize_row(r, &format!("row {i}"), size))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            vocab,
            table: Table::Bigram {
                log_start,
                log_rows,
            },
            label: "bigram".into(),
            passes: AtomicU64::new(0),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// The log-distribution after `context`, without touching the counter.
    fn row_for(&self, context: &[Token]) -> Vec<f64> {
        match &self.table {
            Table::Uniform => {
                let n = self.vocab.size() as f64;
                vec![-(n.ln()); self.vocab.size() as usize]
            }
            Table::Unigram { log_row } => log_row.clone(),
            Table::Bigram {
                log_start,
                log_rows,
            } => match context.last() {
                None => log_start.clone(),
                Some(&t) => log_rows[t as usize].clone(),
            },
        }
    }
}

impl LanguageModel for ToyModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn label(&self) -> &str {
        &self.label
    }

    fn logprobs(&self, context: &[Token]) -> Result<LogProbVector> {
        self.vocab.validate_context(context)?;
        self.passes.fetch_add(1, Ordering::Relaxed);
        Ok(LogProbVector::from_normalized(self.row_for(context)))
    }

    fn score_continuation(&self, context: &[Token], continuation: &[Token]) -> Result<Vec<f64>> {
        if continuation.is_empty() {
            return Err(Error::Input("empty continuation".into()));
        }
        self.vocab.validate_context(context)?;
        self.vocab.validate_tokens(continuation)?;
        self.passes.fetch_add(1, Ordering::Relaxed);
        let mut ctx: Vec<Token> = context.to_vec();
        let mut out = Vec::with_capacity(continuation.len());
        for &tok in continuation {
            out.push(self.row_for(&ctx)[tok as usize]);
            ctx.push(tok);
        }
        Ok(out)
    }

    fn forward_passes(&self) -> u64 {
        self.passes.load(Ordering::Relaxed)
    }

    fn reset_forward_passes(&self) {
        self.passes.store(0, Ordering::Relaxed);
    }
}

// ---------------------------------------------------------------------------
// Model file format
// ---------------------------------------------------------------------------

/// On-disk model document. Probabilities are linear-domain; every row must
/// sum to 1 within 1e-6. `start` holds the unigram row or the bigram
/// empty-context row; `rows` is the bigram table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    #[serde(rename = "type")]
    pub kind: String,
    pub vocab_size: u32,
    pub eos: Token,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<f64>>>,
}

/// Build a model from a parsed document.
pub fn load_model(doc: &ModelDocument) -> Result<ToyModel> {
    let vocab = Vocabulary::with_labels(doc.vocab_size, doc.eos, doc.labels.clone())
        .map_err(|e| Error::Format(e.to_string()))?;
    match doc.kind.as_str() {
        "uniform" => Ok(ToyModel::uniform(vocab)),
        "unigram" => {
            let start = doc
                .start
                .as_ref()
                .ok_or_else(|| Error::Format("unigram model requires \"start\"".into()))?;
            ToyModel::unigram(vocab, start)
        }
        "bigram" => {
            let start = doc
                .start
                .as_ref()
                .ok_or_else(|| Error::Format("bigram model requires \"start\"".into()))?;
            let rows = doc
                .rows
                .as_ref()
                .ok_or_else(|| Error::Format("bigram model requires \"rows\"".into()))?;
            ToyModel::bigram(vocab, start, rows)
        }
        other => Err(Error::Format(format!("unknown model type {other:?}"))),
    }
}

/// Parse a JSON model document and build the model.
pub fn load_model_json(json: &str) -> Result<ToyModel> {
    let doc: ModelDocument = serde_json::from_str(json)?;
    load_model(&doc)
}

/// Load a model from a JSON file; the file stem becomes its label.
pub fn load_model_file(path: impl AsRef<Path>) -> Result<ToyModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let model = load_model_json(&text)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    Ok(model.with_label(label))
}

impl ToyModel {
    /// Serialize back to the document form (normalized probabilities).
    pub fn to_document(&self) -> ModelDocument {
        let expand = |log_row: &[f64]| log_row.iter().map(|v| v.exp()).collect::<Vec<f64>>();
        let (kind, start, rows) = match &self.table {
            Table::Uniform => ("uniform", None, None),
            Table::Unigram { log_row } => ("unigram", Some(expand(log_row)), None),
            Table::Bigram {
                log_start,
                log_rows,
            } => (
                "bigram",
                Some(expand(log_start)),
                Some(log_rows.iter().map(|r| expand(r)).collect()),
            ),
        };
        ModelDocument {
            kind: kind.into(),
            vocab_size: self.vocab.size(),
            eos: self.vocab.eos(),
            labels: self.vocab.labels().map(|l| l.to_vec()),
            start,
            rows,
        }
    }
}

// ---------------------------------------------------------------------------
// Chunk proposal
// ---------------------------------------------------------------------------

/// Which per-token log-probabilities a proposal caches for the density
/// ratios: the raw model distribution (default) or the tempered/truncated
/// distribution actually sampled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioBasis {
    #[default]
    Raw,
    Proposal,
}

/// A speculative chunk of up to `k` tokens with the reference model's
/// log-probability cached per position.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkProposal {
    pub tokens: Vec<Token>,
    pub ref_logprobs: Vec<f64>,
    pub truncated_by_eos: bool,
}

impl ChunkProposal {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Autoregressively sample up to `k` tokens from the reference model,
/// stopping early at eos. Cached log-probabilities are raw by default.
pub fn propose_chunk(
    model: &dyn LanguageModel,
    context: &[Token],
    k: usize,
    cfg: &SamplingConfig,
    rng: &mut dyn RngCore,
) -> Result<ChunkProposal> {
    propose_chunk_with_basis(model, context, k, cfg, RatioBasis::Raw, rng)
}

/// As [`propose_chunk`] with an explicit cached-log-probability basis.
pub fn propose_chunk_with_basis(
    model: &dyn LanguageModel,
    context: &[Token],
    k: usize,
    cfg: &SamplingConfig,
    basis: RatioBasis,
    rng: &mut dyn RngCore,
) -> Result<ChunkProposal> {
    if k == 0 {
        return Err(Error::Input("chunk size k must be >= 1".into()));
    }
    let eos = model.vocab().eos();
    let mut ctx = context.to_vec();
    let mut tokens = Vec::with_capacity(k);
    let mut ref_logprobs = Vec::with_capacity(k);
    let mut truncated_by_eos = false;
    for _ in 0..k {
        let dist = model.logprobs(&ctx)?;
        let tok = sample_token(&dist, cfg, rng)?;
        let lp = match basis {
            RatioBasis::Raw => dist.get(tok),
            RatioBasis::Proposal => {
                let nucleus = nucleus_distribution(&dist, cfg)?;
                let p = nucleus
                    .iter()
                    .find(|(t, _)| *t == tok)
                    .map(|&(_, p)| p)
                    .expect("sampled token is in its nucleus");
                p.ln()
            }
        };
        tokens.push(tok);
        ref_logprobs.push(lp);
        if tok == eos {
            truncated_by_eos = true;
            break;
        }
        ctx.push(tok);
    }
    Ok(ChunkProposal {
        tokens,
        ref_logprobs,
        truncated_by_eos,
    })
}
