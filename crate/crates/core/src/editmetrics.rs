//! Post-editing effort: TER with greedy block shifts, HTER aggregation and
//! added/removed n-gram analysis.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatorRole, CSRecord, Strategy};
use crate::tokenize::{is_punct, tokenize, TokenSeq};

/// Longest block considered for a shift.
pub const MAX_SHIFT_LEN: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum EditError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("record {0} has no edited text")]
    NotEdited(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditBreakdown {
    pub ins: usize,
    pub del: usize,
    pub sub: usize,
    pub shift: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerResult {
    pub edits: usize,
    pub ter: f64,
    pub breakdown: EditBreakdown,
}

pub fn ter(hyp: &TokenSeq, reference: &TokenSeq) -> Result<TerResult, EditError> {
    ter_tokens(&hyp.as_strs(), &reference.as_strs())
}

/// Translation edit rate of `hyp` against `reference`.
///
/// Shifts are applied greedily: each round takes the block move that lowers
/// the word-level Levenshtein distance the most (ties go to the shorter
/// block, then the leftmost source, then the leftmost destination). A block
/// may only move if it occurs verbatim in the reference and holds at least
/// one word the current alignment leaves unmatched.
pub fn ter_tokens(hyp: &[&str], reference: &[&str]) -> Result<TerResult, EditError> {
    if reference.is_empty() {
        return Err(EditError::EmptyReference);
    }
    let mut current: Vec<&str> = hyp.to_vec();
    let mut shifts = 0;
    loop {
        let alignment = align(&current, reference);
        match best_shift(&current, reference, &alignment) {
            Some(shift) => {
                current = apply_shift(&current, shift.start, shift.len, shift.dest);
                shifts += 1;
            }
            None => {
                let edits = alignment.distance + shifts;
                return Ok(TerResult {
                    edits,
                    ter: edits as f64 / reference.len() as f64,
                    breakdown: EditBreakdown {
                        ins: alignment.ins,
                        del: alignment.del,
                        sub: alignment.sub,
                        shift: shifts,
                    },
                });
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Shift {
    start: usize,
    len: usize,
    dest: usize,
}

struct Alignment {
    distance: usize,
    ins: usize,
    del: usize,
    sub: usize,
    /// `matched[i]` is true when hyp token `i` is aligned to an equal ref token.
    matched: Vec<bool>,
}

fn align(hyp: &[&str], reference: &[&str]) -> Alignment {
    let (n, m) = (hyp.len(), reference.len());
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dp[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = dp[i - 1][j - 1] + usize::from(hyp[i - 1] != reference[j - 1]);
            dp[i][j] = diag.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
        }
    }
    let mut matched = vec![false; n];
    let (mut ins, mut del, mut sub) = (0, 0, 0);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = hyp[i - 1] == reference[j - 1];
            if dp[i][j] == dp[i - 1][j - 1] + usize::from(!same) {
                if same {
                    matched[i - 1] = true;
                } else {
                    sub += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[i][j] == dp[i - 1][j] + 1 {
            del += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    Alignment {
        distance: dp[n][m],
        ins,
        del,
        sub,
        matched,
    }
}

/// Word-level Levenshtein distance, two-row variant.
pub fn levenshtein(a: &[&str], b: &[&str]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn occurs_in(block: &[&str], reference: &[&str]) -> bool {
    reference.windows(block.len()).any(|w| w == block)
}

/// Move `hyp[start..start + len]` so that it begins at index `dest` of the
/// sequence left after removing it.
fn apply_shift<'a>(hyp: &[&'a str], start: usize, len: usize, dest: usize) -> Vec<&'a str> {
    let block = &hyp[start..start + len];
    let mut rest: Vec<&str> = Vec::with_capacity(hyp.len());
    rest.extend_from_slice(&hyp[..start]);
    rest.extend_from_slice(&hyp[start + len..]);
    let mut out = Vec::with_capacity(hyp.len());
    out.extend_from_slice(&rest[..dest]);
    out.extend_from_slice(block);
    out.extend_from_slice(&rest[dest..]);
    out
}

fn best_shift(hyp: &[&str], reference: &[&str], alignment: &Alignment) -> Option<Shift> {
    let n = hyp.len();
    let mut best: Option<(usize, Shift)> = None;
    for len in 1..=MAX_SHIFT_LEN.min(n) {
        for start in 0..=n - len {
            if alignment.matched[start..start + len].iter().all(|&m| m) {
                continue;
            }
            if !occurs_in(&hyp[start..start + len], reference) {
                continue;
            }
            for dest in 0..=n - len {
                if dest == start {
                    continue;
                }
                let moved = apply_shift(hyp, start, len, dest);
                let d = levenshtein(&moved, reference);
                if d >= alignment.distance {
                    continue;
                }
                let gain = alignment.distance - d;
                if best.as_ref().is_none_or(|(g, _)| gain > *g) {
                    best = Some((gain, Shift { start, len, dest }));
                }
            }
        }
    }
    best.map(|(_, s)| s)
}

/// HTER of one generation/post-edit pair: TER with the post-edit as reference.
pub fn hter_pair(generated: &str, edited: &str) -> Result<f64, EditError> {
    Ok(ter(&tokenize(generated), &tokenize(edited))?.ter)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditEffortReport {
    pub config: Strategy,
    pub role: AnnotatorRole,
    pub n: usize,
    /// Percentage of pairs with HTER > 0.
    pub p_mod: f64,
    pub hter: f64,
    /// Mean over modified pairs; absent when no pair was modified.
    pub hter_m: Option<f64>,
}

/// Per-record HTER for every edited record, in input order.
pub fn record_hters(records: &[CSRecord]) -> Result<Vec<(&CSRecord, f64)>, EditError> {
    records
        .par_iter()
        .filter(|r| r.is_edited())
        .map(|r| {
            let edited = r.edited_text.as_deref().ok_or_else(|| EditError::NotEdited(r.id.clone()))?;
            Ok((r, hter_pair(&r.generated_text, edited)?))
        })
        .collect()
}

/// Table of post-editing effort grouped by (strategy, annotator role).
/// Unedited records are ignored; "modified" means HTER > 0 after
/// tokenization, so case-only edits count as unmodified.
pub fn edit_effort_report(records: &[CSRecord]) -> Result<Vec<EditEffortReport>, EditError> {
    let scored = record_hters(records)?;
    let mut groups: BTreeMap<(Strategy, AnnotatorRole), Vec<f64>> = BTreeMap::new();
    for (record, h) in scored {
        let role = record.annotator_role.ok_or_else(|| EditError::NotEdited(record.id.clone()))?;
        groups.entry((record.strategy, role)).or_default().push(h);
    }
    Ok(groups
        .into_iter()
        .map(|((config, role), hters)| summarize(config, role, &hters))
        .collect())
}

fn summarize(config: Strategy, role: AnnotatorRole, hters: &[f64]) -> EditEffortReport {
    let n = hters.len();
    let modified: Vec<f64> = hters.iter().copied().filter(|&h| h > 0.0).collect();
    EditEffortReport {
        config,
        role,
        n,
        p_mod: 100.0 * modified.len() as f64 / n as f64,
        hter: hters.iter().sum::<f64>() / n as f64,
        hter_m: (!modified.is_empty()).then(|| modified.iter().sum::<f64>() / modified.len() as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramDelta {
    pub ngram: String,
    pub delta: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexDiffReport {
    pub n_order: usize,
    pub added: Vec<NgramDelta>,
    pub removed: Vec<NgramDelta>,
}

/// Common English function words, used by the stopword-free lexdiff variant.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "s", "same", "she",
    "should", "so", "some", "such", "t", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];

fn count_ngrams<'a>(texts: impl Iterator<Item = &'a str>, n: usize, drop_stopwords: bool) -> HashMap<String, i64> {
    let mut counts = HashMap::new();
    for text in texts {
        let words: Vec<String> = tokenize(text)
            .tokens
            .into_iter()
            .filter(|t| !is_punct(t))
            .filter(|t| !drop_stopwords || !STOPWORDS.contains(&t.as_str()))
            .collect();
        for w in words.windows(n) {
            *counts.entry(w.join(" ")).or_insert(0) += 1;
        }
    }
    counts
}

/// Most added and removed n-grams between the generated and edited sides of
/// `records`. Ranked by delta descending, ties alphabetical.
pub fn lexdiff(records: &[CSRecord], n_order: usize, drop_stopwords: bool) -> LexDiffReport {
    assert!((1..=3).contains(&n_order), "n_order must be 1..=3");
    let edited: Vec<&CSRecord> = records.iter().filter(|r| r.is_edited()).collect();
    let gen = count_ngrams(edited.iter().map(|r| r.generated_text.as_str()), n_order, drop_stopwords);
    let ed = count_ngrams(
        edited.iter().filter_map(|r| r.edited_text.as_deref()),
        n_order,
        drop_stopwords,
    );
    let mut deltas: HashMap<&str, i64> = HashMap::new();
    for (k, v) in &ed {
        *deltas.entry(k).or_insert(0) += v;
    }
    for (k, v) in &gen {
        *deltas.entry(k).or_insert(0) -= v;
    }
    let mut added = Vec::new();
    let mut removed = Vec::new();
    for (ngram, d) in deltas {
        let entry = NgramDelta {
            ngram: ngram.to_string(),
            delta: d.unsigned_abs() as usize,
        };
        match d.signum() {
            1 => added.push(entry),
            -1 => removed.push(entry),
            _ => {}
        }
    }
    let rank = |a: &NgramDelta, b: &NgramDelta| b.delta.cmp(&a.delta).then_with(|| a.ngram.cmp(&b.ngram));
    added.sort_by(rank);
    removed.sort_by(rank);
    LexDiffReport { n_order, added, removed }
}
