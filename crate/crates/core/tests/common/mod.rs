//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

/// Plain dynamic-programming edit distance over tokens.
pub fn lev(a: &[&str], b: &[&str]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Every sequence reachable from `seq` by moving one contiguous block.
pub fn all_block_moves<'a>(seq: &[&'a str]) -> Vec<Vec<&'a str>> {
    let n = seq.len();
    let mut out = Vec::new();
    for start in 0..n {
        for len in 1..=n - start {
            let block = &seq[start..start + len];
            let rest: Vec<&str> = seq[..start].iter().chain(&seq[start + len..]).copied().collect();
            for pos in 0..=rest.len() {
                if pos == start {
                    continue;
                }
                let mut moved = rest[..pos].to_vec();
                moved.extend_from_slice(block);
                moved.extend_from_slice(&rest[pos..]);
                out.push(moved);
            }
        }
    }
    out
}

/// Minimum of (shifts + edit distance) over all sequences of at most two
/// unrestricted block moves.
pub fn brute_force_edits(hyp: &[&str], reference: &[&str]) -> usize {
    let mut best = lev(hyp, reference);
    for one in all_block_moves(hyp) {
        best = best.min(1 + lev(&one, reference));
        if best <= 1 {
            continue;
        }
        for two in all_block_moves(&one) {
            best = best.min(2 + lev(&two, reference));
        }
    }
    best
}

/// Curated hyp/ref pairs of at most six tokens: swaps, block moves,
/// insertions, deletions, substitutions and combinations of these.
pub const TER_ORACLE_SET: [(&str, &str); 50] = [
    ("b a c d", "a b c d"),
    ("a b c d", "a b c d"),
    ("a b c", "a b c d"),
    ("a b c d", "a b c"),
    ("a x c d", "a b c d"),
    ("c d a b", "a b c d"),
    ("d a b c", "a b c d"),
    ("b c d a", "a b c d"),
    ("a c b d", "a b c d"),
    ("a b d c e f", "a b c d e f"),
    ("e f a b c d", "a b c d e f"),
    ("c d e f a b", "a b c d e f"),
    ("a d e b c f", "a b c d e f"),
    ("b a d c", "a b c d"),
    ("b a d c e f", "a b c d e f"),
    ("x y z", "a b c"),
    ("a", "b"),
    ("a", "a"),
    ("a b", "b a"),
    ("a a b", "a b a"),
    ("a b a b", "b a b a"),
    ("the cat sat", "the cat sat down"),
    ("cat the sat", "the cat sat"),
    ("sat the cat", "the cat sat"),
    ("the claim is false", "this is wrong"),
    ("it is not true", "it is true"),
    ("women earn less", "less women earn"),
    ("they are all criminals", "all they are criminals"),
    ("data shows no link", "no link data shows"),
    ("facts matter here", "here facts matter"),
    ("a b c d e", "e d c b a"),
    ("a b c", "c b a"),
    ("a b c d e f", "f e d c b a"),
    ("a b c x", "x a b c"),
    ("x a b c", "a b c x"),
    ("a b x c", "a b c"),
    ("a b", "a b c d e f"),
    ("a b c d e f", "a b"),
    ("a b c d", "x a b c d"),
    ("a b c d", "a b c d x"),
    ("b c d e", "a b c d"),
    ("a c", "a b c"),
    ("a a a", "a a"),
    ("a b a", "a a b"),
    ("a b c a b", "a b a b c"),
    ("p q r s", "r s p q"),
    ("p q r s t", "r s t p q"),
    ("x p q y", "p q x y"),
    ("m n o", "n o m"),
    ("one two three four", "three four one two"),
];

/// Exact one-sided Mann-Whitney p by enumerating all labelings of the pooled
/// values; counts U_a as pairs (x in a, y in b) with x > y plus half ties.
pub fn mwu_permutation_p(a: &[f64], b: &[f64], greater: bool) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let k = a.len();
    let u_of = |xa: &[f64], xb: &[f64]| -> f64 {
        let mut u = 0.0;
        for x in xa {
            for y in xb {
                u += if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 };
            }
        }
        u
    };
    let observed = u_of(a, b);
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let (xa, xb): (Vec<f64>, Vec<f64>) = {
            let mut xa = Vec::new();
            let mut xb = Vec::new();
            for (i, v) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    xa.push(*v);
                } else {
                    xb.push(*v);
                }
            }
            (xa, xb)
        };
        let u = u_of(&xa, &xb);
        total += 1;
        let hit = if greater { u >= observed - 1e-9 } else { u <= observed + 1e-9 };
        hits += u64::from(hit);
    }
    hits as f64 / total as f64
}

/// P(X >= k) for X ~ Binomial(n, p) by summing the pmf built with a Pascal
/// recurrence (no factorials or special functions).
pub fn binomial_tail(k: usize, n: usize, p: f64) -> f64 {
    let mut pmf = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![0.0; pmf.len() + 1];
        for (i, v) in pmf.iter().enumerate() {
            next[i] += v * (1.0 - p);
            next[i + 1] += v * p;
        }
        pmf = next;
    }
    pmf[k..].iter().sum()
}

/// Flesch formulas written out directly.
pub fn fres(words: f64, sentences: f64, syllables: f64) -> f64 {
    206.835 - 1.015 * (words / sentences) - 84.6 * (syllables / words)
}

pub fn fkg(words: f64, sentences: f64, syllables: f64) -> f64 {
    0.39 * (words / sentences) + 11.8 * (syllables / words) - 15.59
}

use counterkit::corpus::{
    BundlePair, CorpusParts, NgoPair, SelectionFlags,
};
use counterkit::{CSRecord, Claim, FactCheckArticle, KnowledgeBundle, NGOReport, Strategy, TargetGroup};

/// `n` claims `c0..`, each with its own article `a{i}` and one matched NGO
/// pair from report `r0`, and no records.
pub fn small_parts(n: usize) -> CorpusParts {
    let report = NGOReport {
        id: "r0".into(),
        source_url: "https://www.ngo.example/myths".into(),
        target_group: TargetGroup::Migrants,
        pairs: (0..n)
            .map(|i| NgoPair { myth: format!("Myth number {i} about migrants."), anti_stereotype: format!("Answer number {i}.") })
            .collect(),
    };
    let mut parts = CorpusParts { reports: vec![report], ..Default::default() };
    for i in 0..n {
        parts.articles.push(FactCheckArticle {
            id: format!("a{i}"),
            url: format!("https://fullfact.org/check/{i}"),
            publisher: "fullfact.org".into(),
            is_signatory: true,
            claim_reviewed: format!("Migrants cause problem {i}."),
            verdict_text: "False.".into(),
            body: format!("Official statistics show that problem {i} is unrelated to migration status."),
            matched_keywords: vec!["migrant".into()],
            selection: SelectionFlags { group_focused: true, counters_false_claim: true, contextualizes_true_claim: false },
        });
        parts.claims.push(Claim {
            id: format!("c{i}"),
            text: format!("Migrants are the cause of problem {i}."),
            target_group: TargetGroup::Migrants,
            source_article_id: format!("a{i}"),
        });
        parts.bundles.push(KnowledgeBundle {
            claim_id: format!("c{i}"),
            fc_article_id: format!("a{i}"),
            ngo_pairs: vec![BundlePair {
                report_id: "r0".into(),
                pair_index: i,
                myth: format!("Myth number {i} about migrants."),
                anti_stereotype: format!("Answer number {i}."),
                similarity: 0.5,
            }],
        });
    }
    parts
}

/// Unedited record for claim `c{i}`.
pub fn generated(i: usize, strategy: Strategy, text: &str) -> CSRecord {
    CSRecord {
        id: CSRecord::make_id(&format!("c{i}"), strategy),
        claim_id: format!("c{i}"),
        strategy,
        generated_text: text.into(),
        edited_text: None,
        annotator_role: None,
        ground_spans: vec![],
        comments: None,
        edited_at: None,
    }
}
