//! Monotonic alignment search over a frame-by-token score matrix, with
//! optional inter-word silence tokens that the search may skip entirely.
//!
//! The search maximizes the total path score subject to: token indices are
//! non-decreasing over frames, advance by at most one token per frame except
//! that a skippable token may be jumped over, the path starts on the first
//! token (or the one after it when the first is skippable) and ends on the
//! last (or the one before it when the last is skippable). Among optimal
//! paths the lexicographically smallest token sequence wins, i.e. the path
//! stays on earlier tokens as long as possible.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use thiserror::Error;

use crate::frontend::{Token, TokenSequence};

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("infeasible alignment: {frames} frames for {required} required tokens")]
    InfeasibleAlignment { frames: usize, required: usize },
    #[error("attention matrix is not row-stochastic at row {row}")]
    NotRowStochastic { row: usize },
    #[error("score matrix contains a non-finite entry at ({t}, {s})")]
    NonFiniteScore { t: usize, s: usize },
    #[error("empty score matrix")]
    EmptyScores,
    #[error("ctm: {0}")]
    BadCtm(String),
}

/// Per-frame per-token log-scores. Entries need not be normalized
/// log-probabilities; only differences matter to the search.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub logp: Array2<f64>,
    pub frame_hop_s: f64,
}

impl ScoreMatrix {
    pub fn new(logp: Array2<f64>, frame_hop_s: f64) -> Result<Self, AlignmentError> {
        if logp.nrows() == 0 || logp.ncols() == 0 {
            return Err(AlignmentError::EmptyScores);
        }
        for ((t, s), v) in logp.indexed_iter() {
            if !v.is_finite() {
                return Err(AlignmentError::NonFiniteScore { t, s });
            }
        }
        Ok(Self { logp, frame_hop_s })
    }

    pub fn n_frames(&self) -> usize {
        self.logp.nrows()
    }

    pub fn n_tokens(&self) -> usize {
        self.logp.ncols()
    }
}

/// A monotonic frame-to-token assignment and its score.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPath {
    pub token_of_frame: Vec<usize>,
    pub loglik: f64,
    pub normalized_loglik: f64,
}

/// Frames assigned to each token; sums to the frame count. Skippable tokens
/// may have zero frames, all others at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDurations {
    pub frames: Vec<usize>,
}

impl TokenDurations {
    pub fn total(&self) -> usize {
        self.frames.iter().sum()
    }
}

/// Maximum-score monotonic path. `skippable[s]` marks tokens the path may
/// omit; skippable tokens must not be adjacent.
pub fn mas_viterbi(
    scores: &ScoreMatrix,
    skippable: &[bool],
) -> Result<AlignmentPath, AlignmentError> {
    let t_frames = scores.n_frames();
    let s_tokens = scores.n_tokens();
    assert_eq!(skippable.len(), s_tokens, "mask length != token count");
    debug_assert!(
        skippable.windows(2).all(|w| !(w[0] && w[1])),
        "adjacent skippable tokens"
    );
    let required = skippable.iter().filter(|&&s| !s).count();
    if t_frames < required.max(1) {
        return Err(AlignmentError::InfeasibleAlignment {
            frames: t_frames,
            required: required.max(1),
        });
    }

    let logp = &scores.logp;
    // suffix[t][s]: best score over frames t..T-1 given frame t sits on token
    // s, honoring the end condition. Filled backwards.
    let mut suffix = Array2::from_elem((t_frames, s_tokens), f64::NEG_INFINITY);
    for s in 0..s_tokens {
        let is_end = s == s_tokens - 1 || (s == s_tokens - 2 && skippable[s_tokens - 1]);
        if is_end {
            suffix[[t_frames - 1, s]] = logp[[t_frames - 1, s]];
        }
    }
    for t in (0..t_frames - 1).rev() {
        for s in 0..s_tokens {
            let stay = suffix[[t + 1, s]];
            let advance = if s + 1 < s_tokens {
                suffix[[t + 1, s + 1]]
            } else {
                f64::NEG_INFINITY
            };
            let jump = if s + 2 < s_tokens && skippable[s + 1] {
                suffix[[t + 1, s + 2]]
            } else {
                f64::NEG_INFINITY
            };
            let best = stay.max(advance).max(jump);
            if best > f64::NEG_INFINITY {
                suffix[[t, s]] = logp[[t, s]] + best;
            }
        }
    }

    // Start on token 0, or token 1 when token 0 is skippable. Taking the
    // smallest start on ties (and preferring "stay" on ties below) yields
    // the lexicographically smallest optimal path.
    let mut starts = vec![0usize];
    if skippable[0] && s_tokens > 1 {
        starts.push(1);
    }
    let mut cur = starts[0];
    for &s in &starts[1..] {
        if suffix[[0, s]] > suffix[[0, cur]] {
            cur = s;
        }
    }
    let loglik = suffix[[0, cur]];
    if !loglik.is_finite() {
        return Err(AlignmentError::InfeasibleAlignment {
            frames: t_frames,
            required,
        });
    }

    let mut token_of_frame = Vec::with_capacity(t_frames);
    token_of_frame.push(cur);
    for t in 1..t_frames {
        // stay > advance > jump on exact ties
        let mut next = cur;
        let mut best = suffix[[t, cur]];
        if cur + 1 < s_tokens && suffix[[t, cur + 1]] > best {
            next = cur + 1;
            best = suffix[[t, cur + 1]];
        }
        if cur + 2 < s_tokens && skippable[cur + 1] && suffix[[t, cur + 2]] > best {
            next = cur + 2;
        }
        cur = next;
        token_of_frame.push(cur);
    }

    Ok(AlignmentPath {
        token_of_frame,
        loglik,
        normalized_loglik: loglik / t_frames as f64,
    })
}

/// Mean over frames of the per-frame maximum attention weight.
pub fn focus_rate(attention: &Array2<f64>) -> Result<f64, AlignmentError> {
    let t = attention.nrows();
    assert!(t > 0 && attention.ncols() > 0);
    for (row, r) in attention.axis_iter(Axis(0)).enumerate() {
        let sum: f64 = r.sum();
        if (sum - 1.0).abs() > 1e-6 || r.iter().any(|&v| v < 0.0) {
            return Err(AlignmentError::NotRowStochastic { row });
        }
    }
    let total: f64 = attention
        .axis_iter(Axis(0))
        .map(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    Ok(total / t as f64)
}

/// One-hot attention matrix of a hard path.
pub fn path_to_attention(path: &AlignmentPath, n_tokens: usize) -> Array2<f64> {
    let mut out = Array2::zeros((path.token_of_frame.len(), n_tokens));
    for (t, &s) in path.token_of_frame.iter().enumerate() {
        out[[t, s]] = 1.0;
    }
    out
}

/// Frames per token along a path.
pub fn durations_from_path(path: &AlignmentPath, n_tokens: usize) -> TokenDurations {
    let mut frames = vec![0usize; n_tokens];
    for &s in &path.token_of_frame {
        frames[s] += 1;
    }
    TokenDurations { frames }
}

/// Align a candidate-`<sil>` token sequence and report, per word boundary,
/// whether its silence token received at least `min_sil_frames` frames.
pub fn detect_silences(
    candidate: &TokenSequence,
    scores: &ScoreMatrix,
    min_sil_frames: usize,
) -> Result<Vec<bool>, AlignmentError> {
    debug_assert!(min_sil_frames >= 1);
    debug_assert_eq!(candidate.tokens.len(), scores.n_tokens());
    let mask = candidate.skippable_mask();
    let path = mas_viterbi(scores, &mask)?;
    let durs = durations_from_path(&path, candidate.tokens.len());
    Ok(candidate
        .boundaries
        .iter()
        .map(|&p| candidate.tokens[p] == Token::Sil && durs.frames[p] >= min_sil_frames)
        .collect())
}

// ---------------------------------------------------------------------------
// Per-utterance Gaussian frame scorer

/// Diagonal-Gaussian frame scorer fit per utterance by hard EM from a
/// uniform-split initialization. One Gaussian per token *type*, so repeated
/// characters pool their statistics. The `<sil>` type starts from the
/// lowest-energy frames so the skippable nodes have somewhere to go.
pub struct GaussianAligner {
    pub em_iters: usize,
    pub var_floor: f64,
}

impl Default for GaussianAligner {
    fn default() -> Self {
        Self {
            em_iters: 4,
            var_floor: 1e-3,
        }
    }
}

struct DiagGaussian {
    mean: Array1<f64>,
    var: Array1<f64>,
}

impl DiagGaussian {
    fn log_density(&self, x: &ndarray::ArrayView1<f64>) -> f64 {
        let mut acc = 0.0;
        for ((&xi, &m), &v) in x.iter().zip(self.mean.iter()).zip(self.var.iter()) {
            let d = xi - m;
            acc += (std::f64::consts::TAU * v).ln() + d * d / v;
        }
        -0.5 * acc
    }
}

impl GaussianAligner {
    /// Score matrix for a candidate token sequence over mel frames
    /// (T x n_mels). Refined by alternating alignment and refitting.
    pub fn score_matrix(
        &self,
        candidate: &TokenSequence,
        mel: &Array2<f64>,
        frame_hop_s: f64,
    ) -> Result<ScoreMatrix, AlignmentError> {
        let t_frames = mel.nrows();
        let tokens = &candidate.tokens;
        let mask = candidate.skippable_mask();
        if t_frames == 0 {
            return Err(AlignmentError::EmptyScores);
        }

        // initial assignment: uniform split over non-skippable tokens
        let solid: Vec<usize> = (0..tokens.len()).filter(|&i| !mask[i]).collect();
        let mut assign: Vec<usize> = (0..t_frames)
            .map(|t| solid[(t * solid.len()) / t_frames])
            .collect();

        let mut scores = self.scores_for_assignment(tokens, mel, &assign)?;
        for _ in 0..self.em_iters {
            let path = mas_viterbi(
                &ScoreMatrix {
                    logp: scores.clone(),
                    frame_hop_s,
                },
                &mask,
            )?;
            if path.token_of_frame == assign {
                break;
            }
            assign = path.token_of_frame;
            scores = self.scores_for_assignment(tokens, mel, &assign)?;
        }
        ScoreMatrix::new(scores, frame_hop_s)
    }

    fn scores_for_assignment(
        &self,
        tokens: &[Token],
        mel: &Array2<f64>,
        assign: &[usize],
    ) -> Result<Array2<f64>, AlignmentError> {
        let t_frames = mel.nrows();
        let dims = mel.ncols();
        let mut types: Vec<Token> = tokens.to_vec();
        types.sort();
        types.dedup();

        let global_mean = mel.mean_axis(Axis(0)).unwrap();
        let mut global_var: Array1<f64> = Array1::zeros(dims);
        for row in mel.axis_iter(Axis(0)) {
            for j in 0..dims {
                let d = row[j] - global_mean[j];
                global_var[j] += d * d;
            }
        }
        global_var.mapv_inplace(|v| (v / t_frames as f64).max(self.var_floor));

        let mut models: Vec<DiagGaussian> = Vec::with_capacity(types.len());
        for ty in &types {
            let rows: Vec<usize> = (0..t_frames)
                .filter(|&t| tokens[assign[t]] == *ty)
                .collect();
            let model = if *ty == Token::Sil && rows.is_empty() {
                // silence has no frames yet: seed from the quietest tenth
                let mut energies: Vec<(f64, usize)> = mel
                    .axis_iter(Axis(0))
                    .enumerate()
                    .map(|(t, r)| (r.sum(), t))
                    .collect();
                energies.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let take = (t_frames / 10).max(1);
                let quiet: Vec<usize> = energies[..take].iter().map(|&(_, t)| t).collect();
                self.fit_gaussian(mel, &quiet, &global_mean, &global_var)
            } else if rows.is_empty() {
                DiagGaussian {
                    mean: global_mean.clone(),
                    var: global_var.clone(),
                }
            } else {
                self.fit_gaussian(mel, &rows, &global_mean, &global_var)
            };
            models.push(model);
        }

        let type_of: Vec<usize> = tokens
            .iter()
            .map(|t| types.iter().position(|ty| ty == t).unwrap())
            .collect();
        let mut scores = Array2::zeros((t_frames, tokens.len()));
        let mut per_type = Array2::zeros((t_frames, types.len()));
        for t in 0..t_frames {
            let frame = mel.row(t);
            for (k, model) in models.iter().enumerate() {
                per_type[[t, k]] = model.log_density(&frame);
            }
        }
        for t in 0..t_frames {
            for (s, &k) in type_of.iter().enumerate() {
                scores[[t, s]] = per_type[[t, k]];
            }
        }
        Ok(scores)
    }

    fn fit_gaussian(
        &self,
        mel: &Array2<f64>,
        rows: &[usize],
        _global_mean: &Array1<f64>,
        global_var: &Array1<f64>,
    ) -> DiagGaussian {
        let dims = mel.ncols();
        let n = rows.len() as f64;
        let mut mean = Array1::zeros(dims);
        for &r in rows {
            mean += &mel.row(r);
        }
        mean /= n;
        let mut var = Array1::zeros(dims);
        for &r in rows {
            for j in 0..dims {
                let d = mel[[r, j]] - mean[j];
                var[j] += d * d;
            }
        }
        var /= n;
        // blend toward the global variance when a type has few frames
        let blend = (1.0 / (n + 1.0)).min(1.0);
        for j in 0..dims {
            var[j] = ((1.0 - blend) * var[j] + blend * global_var[j]).max(self.var_floor);
        }
        DiagGaussian { mean, var }
    }
}

// ---------------------------------------------------------------------------
// CTM persistence

/// Serialize a final token sequence with frame spans: `<token> <start> <n>`.
pub fn write_ctm(tokens: &[Token], durations: &TokenDurations) -> String {
    assert_eq!(tokens.len(), durations.frames.len());
    let mut out = String::new();
    let mut start = 0usize;
    for (tok, &n) in tokens.iter().zip(&durations.frames) {
        out.push_str(&format!("{tok} {start} {n}\n"));
        start += n;
    }
    out
}

pub fn save_ctm(path: &Path, tokens: &[Token], durations: &TokenDurations) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, write_ctm(tokens, durations))
}

/// Parse a CTM back into tokens and durations.
pub fn parse_ctm(text: &str) -> Result<(Vec<Token>, TokenDurations), AlignmentError> {
    let mut tokens = Vec::new();
    let mut frames = Vec::new();
    let mut expected_start = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let bad = |what: &str| AlignmentError::BadCtm(format!("line {}: {what}", i + 1));
        let tok_str = parts.next().ok_or_else(|| bad("missing token"))?;
        let start: usize = parts
            .next()
            .ok_or_else(|| bad("missing start"))?
            .parse()
            .map_err(|_| bad("bad start"))?;
        let n: usize = parts
            .next()
            .ok_or_else(|| bad("missing frame count"))?
            .parse()
            .map_err(|_| bad("bad frame count"))?;
        if start != expected_start {
            return Err(bad(&format!("start {start} != running total {expected_start}")));
        }
        expected_start += n;
        let token = if tok_str == "<sil>" {
            Token::Sil
        } else {
            let mut chars = tok_str.chars();
            let c = chars.next().ok_or_else(|| bad("empty token"))?;
            if chars.next().is_some() {
                return Err(bad(&format!("multi-character token {tok_str:?}")));
            }
            Token::Char(c)
        };
        tokens.push(token);
        frames.push(n);
    }
    Ok((tokens, TokenDurations { frames }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::tokenize;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sm(logp: Array2<f64>) -> ScoreMatrix {
        ScoreMatrix::new(logp, 0.01).unwrap()
    }

    // Brute-force oracle: enumerate every feasible monotonic path, keep the
    // best score, break ties by lexicographically smallest token sequence.
    fn enumerate_best(logp: &Array2<f64>, skippable: &[bool]) -> Option<(Vec<usize>, f64)> {
        let t_frames = logp.nrows();
        let s_tokens = logp.ncols();
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut stack: Vec<(Vec<usize>, f64)> = Vec::new();
        let mut starts = vec![0usize];
        if skippable[0] && s_tokens > 1 {
            starts.push(1);
        }
        for &s in &starts {
            stack.push((vec![s], logp[[0, s]]));
        }
        while let Some((path, score)) = stack.pop() {
            let t = path.len();
            let cur = *path.last().unwrap();
            if t == t_frames {
                let end_ok = cur == s_tokens - 1 || (cur == s_tokens - 2 && skippable[s_tokens - 1]);
                if end_ok {
                    let better = match &best {
                        None => true,
                        Some((bp, bs)) => {
                            score > *bs + 1e-12
                                || ((score - bs).abs() <= 1e-12 && path < *bp)
                        }
                    };
                    if better {
                        best = Some((path, score));
                    }
                }
                continue;
            }
            let mut nexts = vec![cur];
            if cur + 1 < s_tokens {
                nexts.push(cur + 1);
            }
            if cur + 2 < s_tokens && skippable[cur + 1] {
                nexts.push(cur + 2);
            }
            for n in nexts {
                let mut p = path.clone();
                p.push(n);
                stack.push((p, score + logp[[t, n]]));
            }
        }
        best
    }

    #[test]
    fn single_cell() {
        let path = mas_viterbi(&sm(arr2(&[[-0.5]])), &[false]).unwrap();
        assert_eq!(path.token_of_frame, vec![0]);
        assert!((path.loglik + 0.5).abs() < 1e-12);
        assert!((path.normalized_loglik + 0.5).abs() < 1e-12);
    }

    #[test]
    fn dominant_diagonal() {
        let path = mas_viterbi(&sm(arr2(&[[0.0, -10.0], [-10.0, 0.0]])), &[false, false]).unwrap();
        assert_eq!(path.token_of_frame, vec![0, 1]);
        assert!(path.loglik.abs() < 1e-12);
    }

    #[test]
    fn infeasible_when_more_tokens_than_frames() {
        let err = mas_viterbi(&sm(arr2(&[[0.0, 0.0, 0.0]])), &[false, false, false]);
        assert!(matches!(
            err,
            Err(AlignmentError::InfeasibleAlignment { frames: 1, required: 3 })
        ));
    }

    #[test]
    fn matches_enumeration_with_skippable_middle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let logp = Array2::from_shape_fn((6, 3), |_| rng.gen_range(-3.0..3.0));
            let skippable = [false, true, false];
            let path = mas_viterbi(&sm(logp.clone()), &skippable).unwrap();
            let (bp, bs) = enumerate_best(&logp, &skippable).unwrap();
            assert!((path.loglik - bs).abs() < 1e-9);
            assert_eq!(path.token_of_frame, bp);
        }
    }

    #[test]
    fn tie_break_prefers_staying() {
        // all-zero scores: every feasible path ties; lex-smallest stays on
        // token 0 as long as possible
        let path = mas_viterbi(&sm(Array2::zeros((4, 2))), &[false, false]).unwrap();
        assert_eq!(path.token_of_frame, vec![0, 0, 0, 1]);
    }

    #[test]
    fn shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logp = Array2::from_shape_fn((7, 4), |_| rng.gen_range(-2.0..2.0));
        let skippable = [false, false, true, false];
        let base = mas_viterbi(&sm(logp.clone()), &skippable).unwrap();
        let shifted = mas_viterbi(&sm(logp.mapv(|v| v + 3.5)), &skippable).unwrap();
        assert_eq!(base.token_of_frame, shifted.token_of_frame);
        assert!((shifted.loglik - base.loglik - 3.5 * 7.0).abs() < 1e-9);
    }

    #[test]
    fn focus_rate_anchors() {
        let one_hot = arr2(&[[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]);
        assert_eq!(focus_rate(&one_hot).unwrap(), 1.0);
        let uniform = Array2::from_elem((5, 4), 0.25);
        assert!((focus_rate(&uniform).unwrap() - 0.25).abs() < 1e-12);
        let rows = arr2(&[[0.9, 0.1], [0.4, 0.6], [0.75, 0.25]]);
        assert!((focus_rate(&rows).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn focus_rate_rejects_non_stochastic() {
        let bad = arr2(&[[0.5, 0.6]]);
        assert!(matches!(
            focus_rate(&bad),
            Err(AlignmentError::NotRowStochastic { row: 0 })
        ));
    }

    #[test]
    fn path_to_attention_and_durations() {
        let path = AlignmentPath {
            token_of_frame: vec![0, 0, 1],
            loglik: 0.0,
            normalized_loglik: 0.0,
        };
        let att = path_to_attention(&path, 2);
        assert_eq!(att, arr2(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]));
        assert_eq!(focus_rate(&att).unwrap(), 1.0);
        let durs = durations_from_path(&path, 2);
        assert_eq!(durs.frames, vec![2, 1]);
        assert_eq!(durs.total(), 3);

        let all_zero = AlignmentPath {
            token_of_frame: vec![0; 5],
            loglik: 0.0,
            normalized_loglik: 0.0,
        };
        assert_eq!(durations_from_path(&all_zero, 1).frames, vec![5]);
        let s1 = path_to_attention(&all_zero, 1);
        assert!(s1.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn random_paths_duration_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(321);
        for _ in 0..30 {
            let s_tokens = rng.gen_range(1..5);
            let t_frames = rng.gen_range(s_tokens..10);
            let logp = Array2::from_shape_fn((t_frames, s_tokens), |_| rng.gen_range(-2.0..2.0));
            let path = mas_viterbi(&sm(logp), &vec![false; s_tokens]).unwrap();
            let durs = durations_from_path(&path, s_tokens);
            assert_eq!(durs.total(), t_frames);
            // brute recount
            for s in 0..s_tokens {
                let count = path.token_of_frame.iter().filter(|&&x| x == s).count();
                assert_eq!(durs.frames[s], count);
                assert!(count >= 1);
            }
        }
    }

    #[test]
    fn detect_silences_thresholds() {
        // two words, candidate sil between them; construct scores with a
        // 10-frame low-energy gap that only the sil token explains well
        let seq = tokenize("ab cd", "mr").unwrap();
        let cand = seq.with_candidate_sils();
        assert_eq!(cand.tokens.len(), 5);
        let t_frames = 30;
        let mut logp = Array2::from_elem((t_frames, 5), -50.0);
        for t in 0..10 {
            logp[[t, 0]] = 0.0;
            logp[[t, 1]] = if t >= 5 { 0.0 } else { -50.0 };
        }
        for t in 10..20 {
            logp[[t, 2]] = 0.0; // the sil stretch
        }
        for t in 20..30 {
            logp[[t, 3]] = 0.0;
            logp[[t, 4]] = if t >= 25 { 0.0 } else { -50.0 };
        }
        let scores = sm(logp);
        let flags = detect_silences(&cand, &scores, 3).unwrap();
        assert_eq!(flags, vec![true]);

        // oracle cross-check: mas_viterbi gives the sil 10 frames
        let path = mas_viterbi(&scores, &cand.skippable_mask()).unwrap();
        let durs = durations_from_path(&path, 5);
        assert_eq!(durs.frames[2], 10);

        // min_sil_frames above the actual run length flips it off
        let flags = detect_silences(&cand, &scores, 11).unwrap();
        assert_eq!(flags, vec![false]);
    }

    #[test]
    fn detect_silences_zero_and_one_frame_rules() {
        let seq = tokenize("a b", "mr").unwrap();
        let cand = seq.with_candidate_sils();
        // no gap at all: sil gets zero frames
        let mut logp = Array2::from_elem((4, 3), -40.0);
        for t in 0..2 {
            logp[[t, 0]] = 0.0;
        }
        for t in 2..4 {
            logp[[t, 2]] = 0.0;
        }
        let flags = detect_silences(&cand, &sm(logp.clone()), 1).unwrap();
        assert_eq!(flags, vec![false]);

        // exactly one sil frame with min 1 fires
        let mut logp1 = Array2::from_elem((5, 3), -40.0);
        logp1[[0, 0]] = 0.0;
        logp1[[1, 0]] = 0.0;
        logp1[[2, 1]] = 0.0;
        logp1[[3, 2]] = 0.0;
        logp1[[4, 2]] = 0.0;
        let flags = detect_silences(&cand, &sm(logp1), 1).unwrap();
        assert_eq!(flags, vec![true]);
    }

    #[test]
    fn ctm_round_trip() {
        let tokens = vec![Token::Char('a'), Token::Sil, Token::Char('b')];
        let durs = TokenDurations {
            frames: vec![3, 2, 4],
        };
        let text = write_ctm(&tokens, &durs);
        assert_eq!(text, "a 0 3\n<sil> 3 2\nb 5 4\n");
        let (t2, d2) = parse_ctm(&text).unwrap();
        assert_eq!(t2, tokens);
        assert_eq!(d2, durs);
        assert!(parse_ctm("ab 0 3\n").is_err());
        assert!(parse_ctm("a 1 3\n").is_err());
    }

    #[test]
    fn gaussian_aligner_separates_distinct_frames() {
        // synthetic mel: token types with distinct mel signatures
        let seq = tokenize("ab a", "mr").unwrap();
        let cand = seq.with_candidate_sils();
        let dims = 6;
        let sig = |ty: usize| Array1::from_shape_fn(dims, |j| if j == ty { 4.0 } else { -4.0 });
        let mut rows: Vec<Array1<f64>> = Vec::new();
        for _ in 0..8 {
            rows.push(sig(0)); // 'a'
        }
        for _ in 0..8 {
            rows.push(sig(1)); // 'b'
        }
        for _ in 0..6 {
            rows.push(Array1::from_elem(dims, -8.0)); // quiet gap
        }
        for _ in 0..8 {
            rows.push(sig(0)); // 'a' again
        }
        let mut mel = Array2::zeros((rows.len(), dims));
        for (i, r) in rows.iter().enumerate() {
            mel.row_mut(i).assign(r);
        }
        let aligner = GaussianAligner::default();
        let scores = aligner.score_matrix(&cand, &mel, 0.01).unwrap();
        let flags = detect_silences(&cand, &scores, 3).unwrap();
        assert_eq!(flags, vec![true]);
        let path = mas_viterbi(&scores, &cand.skippable_mask()).unwrap();
        let durs = durations_from_path(&path, cand.tokens.len());
        // the final 'a' should own the tail frames
        assert!(durs.frames[3] >= 6, "durations {:?}", durs.frames);
    }
}
