//! Character tokenization with word-boundary tracking, `<sil>` training
//! targets from alignments, and a self-attention silence predictor used at
//! inference time.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::alignment::{self, AlignmentError, ScoreMatrix};
use crate::nn::{
    self,
    layers::{Embedding, Linear, TransformerBlock},
    Adam, GradStore, ParamStore,
};
use crate::util;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("empty text")]
    EmptyText,
    #[error("token sequence already contains <sil>")]
    AlreadyHasSil,
    #[error("missing alignment for utterance {0}")]
    MissingAlignment(String),
    #[error("no word boundaries in the training data")]
    NoBoundaries,
    #[error("label count {labels} != boundary count {boundaries} for {utt_id}")]
    LabelMismatch {
        utt_id: String,
        labels: usize,
        boundaries: usize,
    },
    #[error("unknown character {0:?} for the trained predictor")]
    UnknownChar(char),
    #[error("unknown language {0}")]
    UnknownLanguage(String),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// One TTS input symbol: a raw character or the inter-word silence marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    Char(char),
    Sil,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Char(c) => write!(f, "{c}"),
            Token::Sil => write!(f, "<sil>"),
        }
    }
}

/// Character tokens plus the word-boundary slots between them.
///
/// `boundaries[b]` is an index into `tokens`: the slot where boundary `b`'s
/// `<sil>` sits if present, or where it would be inserted (the first token
/// after the word gap). Invariants: positions are strictly increasing and
/// interior; `<sil>` occurs only at boundary positions, at most once each,
/// never leading, trailing, or adjacent to another `<sil>`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub boundaries: Vec<usize>,
    pub language_id: String,
}

impl TokenSequence {
    /// Number of word boundaries.
    pub fn n_boundaries(&self) -> usize {
        self.boundaries.len()
    }

    pub fn has_sil(&self) -> bool {
        self.tokens.iter().any(|t| *t == Token::Sil)
    }

    pub fn sil_at_boundary(&self, b: usize) -> bool {
        self.tokens[self.boundaries[b]] == Token::Sil
    }

    /// The raw character content, `<sil>` tokens dropped.
    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.tokens.iter().filter_map(|t| match t {
            Token::Char(c) => Some(*c),
            Token::Sil => None,
        })
    }

    /// Skippable mask for the alignment search: `<sil>` tokens are optional.
    pub fn skippable_mask(&self) -> Vec<bool> {
        self.tokens.iter().map(|t| *t == Token::Sil).collect()
    }

    /// Copy with a candidate `<sil>` at every boundary that lacks one.
    pub fn with_candidate_sils(&self) -> TokenSequence {
        let flags = vec![true; self.boundaries.len()];
        self.with_sils_at(&flags)
    }

    /// Copy with `<sil>` inserted at the flagged boundaries. Boundaries that
    /// already hold a `<sil>` keep it regardless of the flag.
    pub fn with_sils_at(&self, flags: &[bool]) -> TokenSequence {
        assert_eq!(flags.len(), self.boundaries.len());
        let mut tokens = Vec::with_capacity(self.tokens.len() + flags.len());
        let mut boundaries = Vec::with_capacity(self.boundaries.len());
        let mut next = 0usize;
        for (i, tok) in self.tokens.iter().enumerate() {
            while next < self.boundaries.len() && self.boundaries[next] == i {
                let already = *tok == Token::Sil;
                boundaries.push(tokens.len());
                if !already && flags[next] {
                    tokens.push(Token::Sil);
                }
                next += 1;
            }
            tokens.push(*tok);
        }
        TokenSequence {
            tokens,
            boundaries,
            language_id: self.language_id.clone(),
        }
    }

    /// Copy with all `<sil>` tokens removed and boundaries re-pointed.
    pub fn without_sils(&self) -> TokenSequence {
        let mut tokens = Vec::with_capacity(self.tokens.len());
        let mut boundaries = Vec::with_capacity(self.boundaries.len());
        let mut next = 0usize;
        for (i, tok) in self.tokens.iter().enumerate() {
            while next < self.boundaries.len() && self.boundaries[next] == i {
                boundaries.push(tokens.len());
                next += 1;
            }
            if *tok != Token::Sil {
                tokens.push(*tok);
            }
        }
        TokenSequence {
            tokens,
            boundaries,
            language_id: self.language_id.clone(),
        }
    }

    fn check_invariants(&self) {
        let n = self.tokens.len();
        debug_assert!(self.boundaries.windows(2).all(|w| w[0] < w[1]));
        for (b, &p) in self.boundaries.iter().enumerate() {
            debug_assert!(p > 0 && p < n, "boundary {b} at {p} not interior");
        }
        for (i, t) in self.tokens.iter().enumerate() {
            if *t == Token::Sil {
                debug_assert!(self.boundaries.contains(&i), "<sil> off-boundary at {i}");
                debug_assert!(i > 0 && i + 1 < n);
                debug_assert!(self.tokens[i - 1] != Token::Sil);
            }
        }
    }
}

/// Character tokenization of a normalized transcript. Spaces emit no token;
/// each inter-word gap is recorded as a boundary.
pub fn tokenize(text: &str, language_id: &str) -> Result<TokenSequence, FrontendError> {
    let mut tokens = Vec::new();
    let mut boundaries = Vec::new();
    for word in text.split_whitespace() {
        if !tokens.is_empty() {
            boundaries.push(tokens.len());
        }
        tokens.extend(word.chars().map(Token::Char));
    }
    if tokens.is_empty() {
        return Err(FrontendError::EmptyText);
    }
    let seq = TokenSequence {
        tokens,
        boundaries,
        language_id: language_id.to_string(),
    };
    seq.check_invariants();
    Ok(seq)
}

/// Per-utterance binary silence labels, one per word boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SilTargets {
    pub utt_id: String,
    pub labels: Vec<bool>,
}

/// Detect silence labels for a batch of utterances from their alignment
/// score matrices. Each entry pairs the base token sequence (no `<sil>`)
/// with scores computed over its candidate-`<sil>` expansion.
pub fn build_sil_targets(
    items: &[(String, TokenSequence, ScoreMatrix)],
    min_sil_frames: usize,
) -> Result<Vec<SilTargets>, FrontendError> {
    items
        .iter()
        .map(|(utt_id, seq, scores)| {
            let cand = seq.with_candidate_sils();
            let labels = alignment::detect_silences(&cand, scores, min_sil_frames)?;
            Ok(SilTargets {
                utt_id: utt_id.clone(),
                labels,
            })
        })
        .collect()
}

pub fn save_sil_targets(path: &Path, targets: &[SilTargets]) -> std::io::Result<()> {
    let mut out = String::new();
    for t in targets {
        let labels: Vec<&str> = t.labels.iter().map(|&b| if b { "1" } else { "0" }).collect();
        out.push_str(&format!("{}\t{}\n", t.utt_id, labels.join(",")));
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, out)
}

pub fn load_sil_targets(path: &Path) -> std::io::Result<Vec<SilTargets>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let (utt_id, rest) = line.split_once('\t').unwrap_or((line, ""));
        let labels = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',').map(|s| s == "1").collect()
        };
        out.push(SilTargets {
            utt_id: utt_id.to_string(),
            labels,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Silence predictor

/// Which character representation the boundary classifier reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryReadout {
    /// The character immediately preceding the boundary.
    PrevChar,
    /// The character immediately following the boundary.
    NextChar,
}

#[derive(Debug, Clone)]
pub struct SilPredictorConfig {
    pub blocks: usize,
    pub width: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub readout: BoundaryReadout,
    pub seed: u64,
}

impl Default for SilPredictorConfig {
    fn default() -> Self {
        Self {
            blocks: 2,
            width: 128,
            heads: 2,
            ffn_mult: 4,
            epochs: 30,
            lr: 1e-3,
            batch: 16,
            readout: BoundaryReadout::PrevChar,
            seed: 0,
        }
    }
}

/// Self-attention boundary classifier: character embedding plus a per-token
/// language embedding, `blocks` transformer blocks, then a per-position
/// binary head evaluated at the boundary readout positions.
pub struct SilPredictor {
    pub cfg: SilPredictorConfig,
    pub params: ParamStore,
    vocab: BTreeMap<char, usize>,
    languages: Vec<String>,
    char_embed: Embedding,
    lang_embed: Embedding,
    blocks: Vec<TransformerBlock>,
    head: Linear,
}

pub struct SilTrainSummary {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub epochs: usize,
}

struct SilItem {
    char_ids: Vec<usize>,
    lang_id: usize,
    readout_pos: Vec<usize>,
    labels: Vec<bool>,
}

impl SilPredictor {
    pub fn new(
        cfg: SilPredictorConfig,
        vocab: BTreeMap<char, usize>,
        languages: Vec<String>,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x51f0);
        let mut params = ParamStore::new();
        let char_embed = Embedding::new(&mut params, "char_embed", vocab.len(), cfg.width, &mut rng);
        let lang_embed = Embedding::new(&mut params, "lang_embed", languages.len(), cfg.width, &mut rng);
        let blocks = (0..cfg.blocks)
            .map(|i| {
                TransformerBlock::new(
                    &mut params,
                    &format!("block{i}"),
                    cfg.width,
                    cfg.heads,
                    cfg.width * cfg.ffn_mult,
                    &mut rng,
                )
            })
            .collect();
        // near-zero head so an untrained model emits ~0 logits
        let head = Linear::new_with_scale(&mut params, "head", cfg.width, 1, 0.01, &mut rng);
        Self {
            cfg,
            params,
            vocab,
            languages,
            char_embed,
            lang_embed,
            blocks,
            head,
        }
    }

    pub fn vocab_from_corpus<'a>(texts: impl Iterator<Item = &'a str>) -> BTreeMap<char, usize> {
        let mut chars: std::collections::BTreeSet<char> = std::collections::BTreeSet::new();
        for t in texts {
            chars.extend(t.chars().filter(|c| !c.is_whitespace()));
        }
        chars.into_iter().enumerate().map(|(i, c)| (c, i)).collect()
    }

    fn encode_item(&self, seq: &TokenSequence, labels: &[bool]) -> Result<SilItem, FrontendError> {
        let char_ids: Vec<usize> = seq
            .chars()
            .map(|c| {
                self.vocab
                    .get(&c)
                    .copied()
                    .ok_or(FrontendError::UnknownChar(c))
            })
            .collect::<Result<_, _>>()?;
        let lang_id = self
            .languages
            .iter()
            .position(|l| *l == seq.language_id)
            .ok_or_else(|| FrontendError::UnknownLanguage(seq.language_id.clone()))?;
        let readout_pos = seq
            .boundaries
            .iter()
            .map(|&p| match self.cfg.readout {
                BoundaryReadout::PrevChar => p - 1,
                BoundaryReadout::NextChar => p,
            })
            .collect();
        Ok(SilItem {
            char_ids,
            lang_id,
            readout_pos,
            labels: labels.to_vec(),
        })
    }

    /// Forward to per-boundary logits. Returns the logits, the per-block
    /// cached activations, and the final hidden states.
    fn forward(
        &self,
        item: &SilItem,
    ) -> (
        Vec<f64>,
        Vec<(Array2<f64>, nn::layers::BlockTrace)>,
        Array2<f64>,
    ) {
        let s = item.char_ids.len();
        let mut x = self.char_embed.forward(&self.params, &item.char_ids);
        let lang_row = self.lang_embed.forward(&self.params, &[item.lang_id]);
        for i in 0..s {
            for j in 0..self.cfg.width {
                x[[i, j]] += lang_row[[0, j]];
            }
        }
        x += &nn::layers::sinusoidal_pe(s, self.cfg.width);
        let mut traces = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, trace) = block.forward(&self.params, &x);
            traces.push((x, trace));
            x = y;
        }
        let logits_all = self.head.forward(&self.params, &x);
        let logits = item.readout_pos.iter().map(|&p| logits_all[[p, 0]]).collect();
        (logits, traces, x)
    }

    /// Summed binary cross-entropy over the item's boundaries plus gradients
    /// of (scale * that sum).
    fn loss_and_grads(&self, item: &SilItem, scale: f64) -> (f64, usize, GradStore) {
        let mut grads = GradStore::zeros_like(&self.params);
        let n_b = item.readout_pos.len();
        if n_b == 0 {
            return (0.0, 0, grads);
        }
        let (logits, traces, x_last) = self.forward(item);
        let mut loss = 0.0;
        let mut d_logits_all = Array2::zeros((item.char_ids.len(), 1));
        for (k, &p) in item.readout_pos.iter().enumerate() {
            let z = logits[k];
            let y = if item.labels[k] { 1.0 } else { 0.0 };
            // stable BCE-with-logits
            loss += z.max(0.0) - z * y + (1.0 + (-z.abs()).exp()).ln();
            let sig = 1.0 / (1.0 + (-z).exp());
            d_logits_all[[p, 0]] += (sig - y) * scale;
        }
        let mut dx = self.head.backward(&self.params, &x_last, &d_logits_all, &mut grads);
        for (block, (x_in, trace)) in self.blocks.iter().zip(traces.iter()).rev() {
            dx = block.backward(&self.params, x_in, trace, &dx, &mut grads);
        }
        // positional encoding has no parameters; remaining gradient flows to
        // the embeddings
        self.char_embed
            .backward(&self.params, &item.char_ids, &dx, &mut grads);
        let d_lang = dx.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
        self.lang_embed
            .backward(&self.params, &[item.lang_id], &d_lang, &mut grads);
        (loss, n_b, grads)
    }

    fn dataset_loss(&self, items: &[SilItem]) -> f64 {
        let sums = util::par_map(items, |item| {
            let n_b = item.readout_pos.len();
            if n_b == 0 {
                return (0.0, 0usize);
            }
            let (logits, _, _) = self.forward(item);
            let mut loss = 0.0;
            for (k, &z) in logits.iter().enumerate() {
                let y = if item.labels[k] { 1.0 } else { 0.0 };
                loss += z.max(0.0) - z * y + (1.0 + (-z.abs()).exp()).ln();
            }
            (loss, n_b)
        });
        let (total, count) = sums
            .into_iter()
            .fold((0.0, 0usize), |(a, b), (l, n)| (a + l, b + n));
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    /// Train on (sequence, labels) pairs with Adam. Deterministic for a
    /// fixed config seed.
    pub fn train(
        &mut self,
        data: &[(TokenSequence, Vec<bool>)],
    ) -> Result<SilTrainSummary, FrontendError> {
        let items: Vec<SilItem> = data
            .iter()
            .map(|(seq, labels)| {
                if labels.len() != seq.n_boundaries() {
                    return Err(FrontendError::LabelMismatch {
                        utt_id: String::new(),
                        labels: labels.len(),
                        boundaries: seq.n_boundaries(),
                    });
                }
                self.encode_item(seq, labels)
            })
            .collect::<Result<_, _>>()?;
        let total_boundaries: usize = items.iter().map(|i| i.labels.len()).sum();
        if total_boundaries == 0 {
            return Err(FrontendError::NoBoundaries);
        }
        let initial_loss = self.dataset_loss(&items);
        let mut opt = Adam::new(&self.params, self.cfg.lr);
        let mut order: Vec<usize> = (0..items.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ 0x7a19);
        for _epoch in 0..self.cfg.epochs {
            shuffle(&mut order, &mut rng);
            for chunk in order.chunks(self.cfg.batch.max(1)) {
                let batch_boundaries: usize =
                    chunk.iter().map(|&i| items[i].labels.len()).sum();
                if batch_boundaries == 0 {
                    continue;
                }
                let scale = 1.0 / batch_boundaries as f64;
                let chunk_items: Vec<&SilItem> = chunk.iter().map(|&i| &items[i]).collect();
                let parts = util::par_map(&chunk_items, |item| self.loss_and_grads(item, scale));
                let mut grads = GradStore::zeros_like(&self.params);
                for (_, _, g) in &parts {
                    grads.add_assign(g);
                }
                opt.step(&mut self.params, &grads);
            }
        }
        let final_loss = self.dataset_loss(&items);
        let mut correct = 0usize;
        for item in &items {
            let (logits, _, _) = self.forward(item);
            for (k, &z) in logits.iter().enumerate() {
                if (z >= 0.0) == item.labels[k] {
                    correct += 1;
                }
            }
        }
        Ok(SilTrainSummary {
            initial_loss,
            final_loss,
            train_accuracy: correct as f64 / total_boundaries as f64,
            epochs: self.cfg.epochs,
        })
    }

    /// Per-boundary silence probabilities for a base token sequence.
    pub fn predict(&self, seq: &TokenSequence) -> Result<Vec<f64>, FrontendError> {
        if seq.has_sil() {
            return Err(FrontendError::AlreadyHasSil);
        }
        let item = self.encode_item(seq, &vec![false; seq.n_boundaries()])?;
        let (logits, _, _) = self.forward(&item);
        Ok(logits.iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect())
    }

    /// Insert `<sil>` at every boundary whose predicted probability reaches
    /// the threshold.
    pub fn predict_and_insert(
        &self,
        seq: &TokenSequence,
        threshold: f64,
    ) -> Result<TokenSequence, FrontendError> {
        let probs = self.predict(seq)?;
        let flags: Vec<bool> = probs.iter().map(|&p| p >= threshold).collect();
        let out = seq.with_sils_at(&flags);
        out.check_invariants();
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), FrontendError> {
        let mut echo = String::new();
        echo.push_str(&format!(
            "blocks={}\nwidth={}\nheads={}\nffn_mult={}\nreadout={}\nseed={}\n",
            self.cfg.blocks,
            self.cfg.width,
            self.cfg.heads,
            self.cfg.ffn_mult,
            match self.cfg.readout {
                BoundaryReadout::PrevChar => "prev",
                BoundaryReadout::NextChar => "next",
            },
            self.cfg.seed
        ));
        let vocab_points: Vec<String> = self.vocab.keys().map(|c| (*c as u32).to_string()).collect();
        echo.push_str(&format!("vocab={}\n", vocab_points.join(",")));
        echo.push_str(&format!("languages={}\n", self.languages.join(",")));
        self.params
            .save(path, &echo)
            .map_err(|e| FrontendError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, FrontendError> {
        let (params, echo) = ParamStore::load(path).map_err(|e| FrontendError::Checkpoint(e.to_string()))?;
        let kv = nn::parse_echo(&echo);
        let get = |k: &str| {
            kv.get(k)
                .cloned()
                .ok_or_else(|| FrontendError::Checkpoint(format!("missing {k}")))
        };
        let cfg = SilPredictorConfig {
            blocks: get("blocks")?.parse().map_err(|_| FrontendError::Checkpoint("blocks".into()))?,
            width: get("width")?.parse().map_err(|_| FrontendError::Checkpoint("width".into()))?,
            heads: get("heads")?.parse().map_err(|_| FrontendError::Checkpoint("heads".into()))?,
            ffn_mult: get("ffn_mult")?.parse().map_err(|_| FrontendError::Checkpoint("ffn_mult".into()))?,
            readout: if get("readout")? == "next" {
                BoundaryReadout::NextChar
            } else {
                BoundaryReadout::PrevChar
            },
            seed: get("seed")?.parse().unwrap_or(0),
            ..Default::default()
        };
        let vocab: BTreeMap<char, usize> = get("vocab")?
            .split(',')
            .filter(|s| !s.is_empty())
            .enumerate()
            .map(|(i, s)| {
                let cp: u32 = s.parse().map_err(|_| FrontendError::Checkpoint("vocab".into()))?;
                let c = char::from_u32(cp).ok_or_else(|| FrontendError::Checkpoint("vocab".into()))?;
                Ok((c, i))
            })
            .collect::<Result<_, FrontendError>>()?;
        let languages: Vec<String> = get("languages")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        let mut fresh = Self::new(cfg, vocab, languages);
        fresh
            .params
            .copy_values_from(&params)
            .map_err(|e| FrontendError::Checkpoint(e.to_string()))?;
        Ok(fresh)
    }
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
