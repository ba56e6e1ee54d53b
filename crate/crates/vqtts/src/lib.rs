//! Multi-speaker multi-lingual text-to-speech with vector-quantized acoustic
//! features, at desk scale.
//!
//! The pipeline has five stages:
//!
//! 1. **Data selection** — rank every utterance of a speaker by character
//!    error rate against an external ASR hypothesis and by alignment
//!    likelihood, keep the best under a first duration budget, then re-rank
//!    the survivors by alignment focus rate and keep the best under a second
//!    budget ([`selection`]).
//! 2. **Text frontend** — raw characters plus an optional `<sil>` token at
//!    word boundaries. Silence positions are detected from a monotonic
//!    alignment at training time and predicted from text by a small
//!    self-attention model at inference ([`frontend`], [`alignment`]).
//! 3. **Feature extraction** — per-frame VQ code indices from a pluggable
//!    quantizer (a k-means surrogate is built in), pitch/energy/POV
//!    auxiliary features, and per-speaker profiles ([`features`]).
//! 4. **Acoustic model** — token sequence + speaker embedding + language id
//!    to VQ indices and auxiliary features, via a duration predictor and a
//!    length regulator ([`txt2vec`]).
//! 5. **Vocoder** — VQ indices + auxiliary features + speaker embedding to a
//!    waveform through a smoothing feature encoder and an upsampling
//!    generator ([`vec2wav`]).
//!
//! Cross-lingual synthesis routes a native speaker's embedding to the
//! acoustic model and the target speaker's embedding to the vocoder, with
//! the predicted pitch contour shifted and rescaled to the target speaker's
//! log-F0 statistics ([`synthesis`]).
//!
//! Everything is driven from a single CLI (`prepare`, `select`, `train-sil`,
//! `train-am`, `train-voc`, `synth`, `run-all`); see [`pipeline`].

pub mod alignment;
pub mod audio;
pub mod config;
pub mod corpus;
pub mod features;
pub mod frontend;
pub mod mel;
pub mod nn;
pub mod pipeline;
pub mod selection;
pub mod synthesis;
pub mod synthetic;
pub mod txt2vec;
pub mod util;
pub mod vec2wav;

pub use config::PipelineConfig;
pub use corpus::{SpeakerRegistry, Utterance};
