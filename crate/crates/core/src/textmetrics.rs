//! Corpus text quality: repetition rate, Flesch readability, complex words
//! and dependency-depth statistics.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{ConlluDocument, ConlluError, ParsedSentence};
use crate::corpus::{AnnotatorRole, CSRecord, Strategy};
use crate::tokenize::tokens;

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("corpus has no words")]
    ZeroWords,
    #[error(transparent)]
    Parse(#[from] ConlluError),
    #[error("document id {0:?} is not of the form <record id>/gen or <record id>/ed")]
    DocId(String),
}

/// How a window's non-singleton rate is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RrMode {
    /// Share of n-gram occurrences whose type occurs at least twice.
    #[default]
    Occurrence,
    /// Share of n-gram types that occur at least twice.
    Type,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrConfig {
    pub window: usize,
    /// A trailing partial window is kept when it holds at least this many tokens.
    pub min_tail: usize,
    pub max_n: usize,
    pub shuffles: u64,
    pub mode: RrMode,
    /// Floor applied to each per-order rate before the geometric mean.
    pub epsilon: f64,
}

impl Default for RrConfig {
    fn default() -> Self {
        RrConfig {
            window: 1000,
            min_tail: 500,
            max_n: 4,
            shuffles: 5,
            mode: RrMode::Occurrence,
            epsilon: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRate {
    /// Mean over shuffles, with per-order rates floored at epsilon.
    pub rr: f64,
    /// Same without the floor; zero as soon as one order has no repeats.
    pub rr_raw: f64,
}

/// Split a token stream into non-overlapping windows. The trailing partial
/// window is kept if it is long enough, or if it is the only window.
pub fn windows<'a, T>(tokens: &'a [T], cfg: &RrConfig) -> Vec<&'a [T]> {
    let mut out: Vec<&[T]> = tokens.chunks(cfg.window).collect();
    if out.len() > 1 && out.last().is_some_and(|w| w.len() < cfg.min_tail) {
        out.pop();
    }
    out
}

/// Non-singleton rate of `n`-grams inside one window, `None` if the window
/// is shorter than `n`.
pub fn window_rate<T: std::hash::Hash + Eq>(window: &[T], n: usize, mode: RrMode) -> Option<f64> {
    if window.len() < n {
        return None;
    }
    let mut counts: HashMap<&[T], usize> = HashMap::new();
    for g in window.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    Some(match mode {
        RrMode::Occurrence => {
            let repeated: usize = counts.values().filter(|&&c| c >= 2).sum();
            repeated as f64 / (window.len() - n + 1) as f64
        }
        RrMode::Type => {
            let repeated = counts.values().filter(|&&c| c >= 2).count();
            repeated as f64 / counts.len() as f64
        }
    })
}

/// Per-order rates (n = 1..=max_n) averaged over the windows of one token stream.
pub fn ngram_rates<T: std::hash::Hash + Eq>(tokens: &[T], cfg: &RrConfig) -> Vec<f64> {
    let wins = windows(tokens, cfg);
    (1..=cfg.max_n)
        .map(|n| {
            let rates: Vec<f64> = wins.iter().filter_map(|w| window_rate(w, n, cfg.mode)).collect();
            if rates.is_empty() {
                0.0
            } else {
                rates.iter().sum::<f64>() / rates.len() as f64
            }
        })
        .collect()
}

fn geometric_rr(rates: &[f64], floor: Option<f64>) -> f64 {
    let k = rates.len() as f64;
    let log_sum: f64 = rates
        .iter()
        .map(|&r| match floor {
            Some(eps) => r.max(eps).ln(),
            None => r.ln(),
        })
        .sum();
    let gm = (log_sum / k).exp();
    100.0 * if gm.is_nan() { 0.0 } else { gm }
}

pub fn repetition_rate<S: AsRef<str> + Sync>(corpus: &[S], seed_base: u64) -> Result<RepetitionRate, TextError> {
    repetition_rate_with(corpus, seed_base, &RrConfig::default())
}

/// Repetition rate averaged over `cfg.shuffles` document shuffles seeded
/// `seed_base, seed_base + 1, ...`.
///
/// Documents are sorted before shuffling, so the result depends only on the
/// multiset of documents and the seeds.
pub fn repetition_rate_with<S: AsRef<str> + Sync>(
    corpus: &[S],
    seed_base: u64,
    cfg: &RrConfig,
) -> Result<RepetitionRate, TextError> {
    let mut docs: Vec<Vec<String>> = corpus.iter().map(|d| tokens(d.as_ref())).collect();
    if docs.iter().all(Vec::is_empty) {
        return Err(TextError::EmptyCorpus);
    }
    docs.sort();
    let per_shuffle: Vec<(f64, f64)> = (0..cfg.shuffles)
        .into_par_iter()
        .map(|s| {
            let mut order: Vec<&Vec<String>> = docs.iter().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed_base.wrapping_add(s));
            order.shuffle(&mut rng);
            let stream: Vec<&str> = order.iter().flat_map(|d| d.iter().map(String::as_str)).collect();
            let rates = ngram_rates(&stream, cfg);
            (geometric_rr(&rates, Some(cfg.epsilon)), geometric_rr(&rates, None))
        })
        .collect();
    let k = per_shuffle.len() as f64;
    Ok(RepetitionRate {
        rr: per_shuffle.iter().map(|p| p.0).sum::<f64>() / k,
        rr_raw: per_shuffle.iter().map(|p| p.1).sum::<f64>() / k,
    })
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "u.s", "u.k",
    "no", "inc", "ltd", "co", "jan", "feb", "aug", "sept", "oct", "nov", "dec", "approx",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Split on terminal punctuation `.`, `!`, `?` followed by whitespace or end
/// of text. Known abbreviations and single-letter initials do not end a
/// sentence. Trailing text without terminal punctuation is a sentence too.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (b, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && (is_terminal(chars[j + 1].1) || matches!(chars[j + 1].1, '"' | '\'' | ')' | '”' | '’')) {
            j += 1;
        }
        let at_break = j + 1 == chars.len() || chars[j + 1].1.is_whitespace();
        if at_break && !(c == '.' && j == i && is_abbreviation(&text[start..b])) {
            let end = if j + 1 == chars.len() { text.len() } else { chars[j + 1].0 };
            let sentence = text[start..end].trim();
            if sentence.chars().any(char::is_alphanumeric) {
                out.push(sentence);
            }
            start = end;
        }
        i = j + 1;
    }
    let tail = text[start..].trim();
    if tail.chars().any(char::is_alphanumeric) {
        out.push(tail);
    }
    out
}

fn is_abbreviation(before: &str) -> bool {
    let word = before.rsplit(char::is_whitespace).next().unwrap_or("");
    let word = word.trim_start_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    if word.chars().count() == 1 && word.chars().all(char::is_alphabetic) {
        return true;
    }
    ABBREVIATIONS.contains(&word.as_str())
}

/// Words for readability: whitespace-separated, edge punctuation trimmed,
/// tokens without any letter or digit dropped.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| w.chars().any(char::is_alphanumeric))
        .collect()
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel-group syllable estimate with a silent-final-`e` rule.
pub fn syllables(word: &str) -> usize {
    let letters: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    if letters.is_empty() || word.chars().any(|c| c.is_ascii_digit()) {
        return 1;
    }
    let mut count: usize = 0;
    let mut prev_vowel = false;
    for &c in &letters {
        let v = is_vowel(c);
        if v && !prev_vowel {
            count += 1;
        }
        prev_vowel = v;
    }
    let n = letters.len();
    if letters[n - 1] == 'e' {
        let consonant_le = n >= 3 && letters[n - 2] == 'l' && !is_vowel(letters[n - 3]);
        if !consonant_le {
            count = count.saturating_sub(1);
        }
    }
    count.max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readability {
    pub fres: f64,
    pub fkg: f64,
    pub cw: f64,
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
    pub complex_words: usize,
}

pub fn readability<S: AsRef<str>>(corpus: &[S]) -> Result<Readability, TextError> {
    let (mut w, mut s, mut syl, mut complex) = (0usize, 0usize, 0usize, 0usize);
    for text in corpus {
        let text = text.as_ref();
        s += split_sentences(text).len();
        for word in words(text) {
            let k = syllables(word);
            w += 1;
            syl += k;
            complex += usize::from(k >= 3);
        }
    }
    if w == 0 || s == 0 {
        return Err(TextError::ZeroWords);
    }
    let wps = w as f64 / s as f64;
    let spw = syl as f64 / w as f64;
    Ok(Readability {
        fres: 206.835 - 1.015 * wps - 84.6 * spw,
        fkg: 0.39 * wps + 11.8 * spw - 15.59,
        cw: complex as f64 / w as f64,
        words: w,
        sentences: s,
        syllables: syl,
        complex_words: complex,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntacticMetrics {
    pub asd: f64,
    pub msd: f64,
    pub nst: f64,
}

/// Depth statistics. Each inner slice is the parse of one counterspeech
/// item; per-item mean/max depth and sentence count are macro-averaged.
/// Items without sentences are skipped.
pub fn syntactic_metrics(items: &[Vec<ParsedSentence>]) -> Result<Option<SyntacticMetrics>, TextError> {
    let mut asd = Vec::new();
    let mut msd = Vec::new();
    let mut nst = Vec::new();
    for sentences in items.iter().filter(|s| !s.is_empty()) {
        let depths = sentences.iter().map(ParsedSentence::depth).collect::<Result<Vec<_>, _>>()?;
        asd.push(depths.iter().sum::<usize>() as f64 / depths.len() as f64);
        msd.push(*depths.iter().max().expect("non-empty") as f64);
        nst.push(depths.len() as f64);
    }
    if asd.is_empty() {
        return Ok(None);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Some(SyntacticMetrics {
        asd: mean(&asd),
        msd: mean(&msd),
        nst: mean(&nst),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusTag {
    Gen,
    Ed,
}

/// Parses keyed by (record id, generated or edited side).
pub type ParseIndex = HashMap<(String, CorpusTag), Vec<ParsedSentence>>;

/// Index CoNLL-U documents whose ids are `<record id>/gen` or `<record id>/ed`.
pub fn parse_index(docs: Vec<ConlluDocument>) -> Result<ParseIndex, TextError> {
    let mut index = ParseIndex::new();
    for doc in docs {
        let id = doc.doc_id.unwrap_or_default();
        let key = match id.rsplit_once('/') {
            Some((rec, "gen")) if !rec.is_empty() => (rec.to_string(), CorpusTag::Gen),
            Some((rec, "ed")) if !rec.is_empty() => (rec.to_string(), CorpusTag::Ed),
            _ => return Err(TextError::DocId(id)),
        };
        index.entry(key).or_default().extend(doc.sentences);
    }
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextQualityReport {
    pub strategy: Strategy,
    pub role: AnnotatorRole,
    pub corpus_tag: CorpusTag,
    pub n: usize,
    pub rr: f64,
    pub rr_raw: f64,
    pub fres: f64,
    pub fkg: f64,
    pub cw: f64,
    pub asd: Option<f64>,
    pub msd: Option<f64>,
    pub nst: Option<f64>,
}

/// One report per (strategy, annotator role, side) over edited records.
/// Syntactic fields are filled only when every record of the group has a parse.
pub fn quality_report(
    records: &[CSRecord],
    parses: Option<&ParseIndex>,
    seed_base: u64,
    cfg: &RrConfig,
) -> Result<Vec<TextQualityReport>, TextError> {
    let mut groups: BTreeMap<(Strategy, AnnotatorRole), Vec<&CSRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_edited()) {
        if let Some(role) = r.annotator_role {
            groups.entry((r.strategy, role)).or_default().push(r);
        }
    }
    let mut out = Vec::new();
    for ((strategy, role), recs) in groups {
        for tag in [CorpusTag::Gen, CorpusTag::Ed] {
            let texts: Vec<&str> = recs
                .iter()
                .map(|r| match tag {
                    CorpusTag::Gen => r.generated_text.as_str(),
                    CorpusTag::Ed => r.edited_text.as_deref().unwrap_or_default(),
                })
                .collect();
            let rr = repetition_rate_with(&texts, seed_base, cfg)?;
            let read = readability(&texts)?;
            let syn = match parses {
                Some(index) => {
                    let items: Option<Vec<Vec<ParsedSentence>>> =
                        recs.iter().map(|r| index.get(&(r.id.clone(), tag)).cloned()).collect();
                    match items {
                        Some(items) => syntactic_metrics(&items)?,
                        None => None,
                    }
                }
                None => None,
            };
            out.push(TextQualityReport {
                strategy,
                role,
                corpus_tag: tag,
                n: recs.len(),
                rr: rr.rr,
                rr_raw: rr.rr_raw,
                fres: read.fres,
                fkg: read.fkg,
                cw: read.cw,
                asd: syn.map(|s| s.asd),
                msd: syn.map(|s| s.msd),
                nst: syn.map(|s| s.nst),
            });
        }
    }
    Ok(out)
}
