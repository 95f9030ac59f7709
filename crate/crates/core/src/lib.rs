//! Decoding-time multi-preference text generation.
//!
//! A reference model proposes speculative token chunks; preference models
//! score them through cumulative density ratios against the reference; a
//! log-domain rejection test with an adaptive sliding-window bound decides
//! what to commit, salvaging prefixes and falling back to single-token
//! rejection sampling when needed. Baseline decoders, a brute-force target
//! oracle for exact small-instance verification, an efficiency harness, and
//! a remote model client round out the crate.

mod event_log;

pub mod baselines;
pub mod bench;
pub mod bound;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod math;
pub mod model;
pub mod oracle;
pub mod remote;
pub mod scoring;
pub mod scr;
pub mod stats;
pub mod tune;
pub mod verify;

pub use baselines::{base_decode, mod_decode, seq_rs_decode, token_rs_decode, DecoderKind};
pub use bench::{run_benchmark, BenchReport, BenchRow};
pub use bound::{BoundEstimator, BoundPhase};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use model::{
    load_model, load_model_file, load_model_json, propose_chunk, sample_token, ChunkProposal,
    LanguageModel, LogProbVector, ModelDocument, RatioBasis, SamplingConfig, Token, TokenSequence,
    ToyModel, Vocabulary,
};
pub use oracle::{
    empirical_distribution, enumerate_sequences, exact_chunk_conditional, target_distribution,
    tv_distance, SequenceDistribution, VerificationReport, VerifyOutcome,
};
pub use remote::{EndpointConfig, RemoteModel};
pub use scoring::{
    accept_test, aggregate_log_score, chunk_log_ratio, signed_reward, ChunkScore, PreferenceWeights,
};
pub use scr::{
    decode, rs1_fallback, validate_chunk, BufferPolicy, ChunkOutcome, DecodeConfig, LogM0,
    OutcomeKind,
};
pub use stats::DecodeStats;
pub use tune::{tune_alpha, TuneAborted, TuneRecord, TunerState};
