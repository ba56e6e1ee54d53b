//! Two-stage per-speaker training-set selection under duration budgets.
//!
//! Stage 1 ranks a speaker's utterances by a combined standard score of low
//! CER and high alignment likelihood and keeps the best under the first
//! budget. Stage 2 re-ranks the survivors by alignment focus rate and keeps
//! the best under the second budget. Budgets apply per speaker,
//! independently.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("empty reference transcript")]
    EmptyReference,
    #[error("budgets must satisfy 0 < budget2 <= budget1 (got {budget1}, {budget2})")]
    BadBudgets { budget1: f64, budget2: f64 },
}

/// Per-utterance quality measurements driving the selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMetrics {
    pub utt_id: String,
    pub speaker_id: String,
    pub cer: f64,
    pub norm_loglik: f64,
    pub focus_rate: f64,
    pub duration_s: f64,
}

/// Character error rate: unit-cost Levenshtein distance over the character
/// sequences (spaces included, whitespace runs collapsed first) divided by
/// the reference length.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64, SelectionError> {
    let norm = |s: &str| -> Vec<char> {
        let joined = s.split_whitespace().collect::<Vec<_>>().join(" ");
        joined.chars().collect()
    };
    let r = norm(reference);
    let h = norm(hypothesis);
    if r.is_empty() {
        return Err(SelectionError::EmptyReference);
    }
    // two-row edit distance
    let mut prev: Vec<usize> = (0..=h.len()).collect();
    let mut cur = vec![0usize; h.len() + 1];
    for i in 1..=r.len() {
        cur[0] = i;
        for j in 1..=h.len() {
            let sub = prev[j - 1] + usize::from(r[i - 1] != h[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[h.len()] as f64 / r.len() as f64)
}

fn standard_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Stage-1 ordering: descending by `z(norm_loglik) - cer_weight * z(cer)`
/// where z is the within-list standard score (a constant column contributes
/// zero). Ties break by ascending utterance id.
pub fn rank_stage1(metrics: &[SelectionMetrics], cer_weight: f64) -> Vec<SelectionMetrics> {
    let logliks: Vec<f64> = metrics.iter().map(|m| m.norm_loglik).collect();
    let cers: Vec<f64> = metrics.iter().map(|m| m.cer).collect();
    let z_ll = standard_scores(&logliks);
    let z_cer = standard_scores(&cers);
    let mut order: Vec<usize> = (0..metrics.len()).collect();
    let score = |i: usize| z_ll[i] - cer_weight * z_cer[i];
    order.sort_by(|&a, &b| {
        score(b)
            .total_cmp(&score(a))
            .then_with(|| metrics[a].utt_id.cmp(&metrics[b].utt_id))
    });
    order.into_iter().map(|i| metrics[i].clone()).collect()
}

/// Greedy skip-and-continue packing: walk the ranked order, take whatever
/// still fits the remaining budget, and keep walking to the end.
pub fn select_budget(ranked: &[SelectionMetrics], budget_s: f64) -> Vec<SelectionMetrics> {
    let mut used = 0.0;
    let mut out = Vec::new();
    for m in ranked {
        if used + m.duration_s <= budget_s {
            used += m.duration_s;
            out.push(m.clone());
        }
    }
    out
}

/// Per-speaker outcome of the two-stage rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerSelection {
    pub stage1_ids: Vec<String>,
    pub stage2_ids: Vec<String>,
    pub stage1_seconds: f64,
    pub stage2_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub budget1_s: f64,
    pub budget2_s: f64,
    pub per_speaker: BTreeMap<String, SpeakerSelection>,
    pub metrics: Vec<SelectionMetrics>,
}

impl SelectionReport {
    pub fn stage2_contains(&self, speaker_id: &str, utt_id: &str) -> bool {
        self.per_speaker
            .get(speaker_id)
            .map(|s| s.stage2_ids.iter().any(|id| id == utt_id))
            .unwrap_or(false)
    }

    pub fn all_stage2_ids(&self) -> Vec<String> {
        self.per_speaker
            .values()
            .flat_map(|s| s.stage2_ids.iter().cloned())
            .collect()
    }
}

/// Run both stages for every speaker present in `metrics`.
pub fn select_training_set(
    metrics: &[SelectionMetrics],
    budget1_s: f64,
    budget2_s: f64,
    cer_weight: f64,
) -> Result<SelectionReport, SelectionError> {
    if !(budget2_s > 0.0) || budget2_s > budget1_s {
        return Err(SelectionError::BadBudgets {
            budget1: budget1_s,
            budget2: budget2_s,
        });
    }
    let mut by_speaker: BTreeMap<String, Vec<SelectionMetrics>> = BTreeMap::new();
    for m in metrics {
        by_speaker
            .entry(m.speaker_id.clone())
            .or_default()
            .push(m.clone());
    }
    let mut per_speaker = BTreeMap::new();
    for (speaker, speaker_metrics) in by_speaker {
        let ranked = rank_stage1(&speaker_metrics, cer_weight);
        let stage1 = select_budget(&ranked, budget1_s);
        let mut by_focus = stage1.clone();
        by_focus.sort_by(|a, b| {
            b.focus_rate
                .total_cmp(&a.focus_rate)
                .then_with(|| a.utt_id.cmp(&b.utt_id))
        });
        let stage2 = select_budget(&by_focus, budget2_s);
        per_speaker.insert(
            speaker,
            SpeakerSelection {
                stage1_seconds: stage1.iter().map(|m| m.duration_s).sum(),
                stage2_seconds: stage2.iter().map(|m| m.duration_s).sum(),
                stage1_ids: stage1.into_iter().map(|m| m.utt_id).collect(),
                stage2_ids: stage2.into_iter().map(|m| m.utt_id).collect(),
            },
        );
    }
    Ok(SelectionReport {
        budget1_s,
        budget2_s,
        per_speaker,
        metrics: metrics.to_vec(),
    })
}

/// One row per utterance: speaker, utt id, metrics, stage flags. Rows are
/// sorted by (speaker, utt id) so identical inputs produce identical bytes.
pub fn report_tsv(report: &SelectionReport) -> String {
    let mut rows: Vec<&SelectionMetrics> = report.metrics.iter().collect();
    rows.sort_by(|a, b| {
        a.speaker_id
            .cmp(&b.speaker_id)
            .then_with(|| a.utt_id.cmp(&b.utt_id))
    });
    let mut out = String::from("speaker\tutt_id\tcer\tnorm_loglik\tfocus_rate\tstage1\tstage2\n");
    for m in rows {
        let sel = &report.per_speaker[&m.speaker_id];
        let s1 = sel.stage1_ids.iter().any(|id| *id == m.utt_id) as u8;
        let s2 = sel.stage2_ids.iter().any(|id| *id == m.utt_id) as u8;
        writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            m.speaker_id, m.utt_id, m.cer, m.norm_loglik, m.focus_rate, s1, s2
        )
        .unwrap();
    }
    out
}

pub fn save_report(path: &Path, report: &SelectionReport) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, report_tsv(report))
}
