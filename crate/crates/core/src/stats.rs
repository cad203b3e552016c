//! Significance tests and agreement measures for the two human surveys.
//!
//! Ratings are encoded 0..=4 (`NoAttempt` = 0 ... `VeryGood` = 4). The
//! conflated encoding maps `Good`/`VeryGood` to 1 and everything else to 0.
//! Stars: `*` for p < 0.01, `**` for p < 0.001.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

use crate::corpus::{Dimension, ResponseValue, Strategy, SurveyKind, SurveyResponse};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("invalid arguments: {0}")]
    InvalidArgument(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty sample")]
    EmptySample,
    #[error("constant input, correlation undefined")]
    Constant,
    #[error("no annotator pair shares an item")]
    NoOverlap,
}

/// Exact upper tail P(X >= k) for X ~ Binomial(n, p0).
pub fn binomial_one_sided(k: u64, n: u64, p0: f64) -> Result<f64, StatsError> {
    if k > n || !(p0 > 0.0 && p0 < 1.0) {
        return Err(StatsError::InvalidArgument(format!("k={k}, n={n}, p0={p0}")));
    }
    let (lp, lq) = (p0.ln(), (1.0 - p0).ln());
    let tail: f64 = (k..=n)
        .map(|i| (ln_binomial(n, i) + i as f64 * lp + (n - i) as f64 * lq).exp())
        .sum();
    Ok(tail.min(1.0))
}

pub fn star(p: f64) -> &'static str {
    if p < 0.001 {
        "**"
    } else if p < 0.01 {
        "*"
    } else {
        ""
    }
}

/// Midranks (1-based) of `values`, ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// `a` tends to be smaller than `b`.
    Less,
    /// `a` tends to be larger than `b`.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    Auto,
    Exact,
    Normal,
}

/// Combined sample size up to which the exact permutation distribution is used.
pub const MWU_EXACT_MAX_N: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwuResult {
    /// U statistic of the first sample.
    pub u: f64,
    pub u_b: f64,
    pub p: f64,
    pub method: MwuMethod,
    /// All values identical; p is set to 1.
    pub degenerate: bool,
}

pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<MwuResult, StatsError> {
    mann_whitney_u_with(a, b, alternative, MwuMethod::Auto)
}

pub fn mann_whitney_u_with(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    method: MwuMethod,
) -> Result<MwuResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..n1].iter().sum();
    let u = rank_sum_a - (n1 * (n1 + 1)) as f64 / 2.0;
    let u_b = (n1 * n2) as f64 - u;
    let method = match method {
        MwuMethod::Auto if n1 + n2 <= MWU_EXACT_MAX_N => MwuMethod::Exact,
        MwuMethod::Auto => MwuMethod::Normal,
        m => m,
    };
    if pooled.iter().all(|&v| v == pooled[0]) {
        return Ok(MwuResult { u, u_b, p: 1.0, method, degenerate: true });
    }
    let p = match method {
        MwuMethod::Exact => exact_mwu_p(&ranks, n1, u, alternative),
        _ => normal_mwu_p(&ranks, n1, n2, u, alternative),
    };
    Ok(MwuResult { u, u_b, p: p.min(1.0), method, degenerate: false })
}

/// Enumerate every split of the pooled midranks into groups of size n1.
fn exact_mwu_p(ranks: &[f64], n1: usize, u_obs: f64, alternative: Alternative) -> f64 {
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let mut us = Vec::new();
    let mut chosen = Vec::with_capacity(n1);
    fn rec(ranks: &[f64], start: usize, n1: usize, chosen: &mut Vec<f64>, offset: f64, us: &mut Vec<f64>) {
        if chosen.len() == n1 {
            us.push(chosen.iter().sum::<f64>() - offset);
            return;
        }
        let need = n1 - chosen.len();
        for i in start..=ranks.len() - need {
            chosen.push(ranks[i]);
            rec(ranks, i + 1, n1, chosen, offset, us);
            chosen.pop();
        }
    }
    rec(ranks, 0, n1, &mut chosen, offset, &mut us);
    let total = us.len() as f64;
    let tol = 1e-9;
    let le = us.iter().filter(|&&u| u <= u_obs + tol).count() as f64 / total;
    let ge = us.iter().filter(|&&u| u >= u_obs - tol).count() as f64 / total;
    match alternative {
        Alternative::Less => le,
        Alternative::Greater => ge,
        Alternative::TwoSided => (2.0 * le.min(ge)).min(1.0),
    }
}

fn normal_mwu_p(ranks: &[f64], n1: usize, n2: usize, u: f64, alternative: Alternative) -> f64 {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let n = n1f + n2f;
    let mut tie_counts: HashMap<u64, usize> = HashMap::new();
    for r in ranks {
        *tie_counts.entry(r.to_bits()).or_insert(0) += 1;
    }
    let tie_term: f64 = tie_counts.values().map(|&t| (t * t * t - t) as f64).sum();
    let var = n1f * n2f / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let mean = n1f * n2f / 2.0;
    let normal = Normal::standard();
    match alternative {
        Alternative::Greater => normal.sf((u - mean - 0.5) / sd),
        Alternative::Less => normal.cdf((u - mean + 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((u - mean).abs() - 0.5).max(0.0) / sd;
            (2.0 * normal.sf(z)).min(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub po: f64,
    pub pe: f64,
    /// Expected agreement was 1 (a single label used by both).
    pub degenerate: bool,
}

pub fn cohens_kappa<L: Eq + Hash>(a: &[L], b: &[L]) -> Result<KappaResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = a.len() as f64;
    let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut ca: HashMap<&L, f64> = HashMap::new();
    let mut cb: HashMap<&L, f64> = HashMap::new();
    for x in a {
        *ca.entry(x).or_insert(0.0) += 1.0;
    }
    for y in b {
        *cb.entry(y).or_insert(0.0) += 1.0;
    }
    let pe: f64 = ca.iter().map(|(k, &c)| c / n * cb.get(k).copied().unwrap_or(0.0) / n).sum();
    if (1.0 - pe).abs() < 1e-12 {
        return Ok(KappaResult {
            kappa: if po == 1.0 { 1.0 } else { 0.0 },
            po,
            pe,
            degenerate: true,
        });
    }
    Ok(KappaResult {
        kappa: ((po - pe) / (1.0 - pe)).clamp(-1.0, 1.0),
        po,
        pe,
        degenerate: false,
    })
}

/// Pearson correlation of midranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::InvalidArgument("need at least two observations".into()));
    }
    pearson(&midranks(a), &midranks(b))
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx).powi(2);
        syy += (yi - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Constant);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ordinal encodings of the five-level rating scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingEncoding {
    /// NoAttempt=0, VeryPoor=1, Poor=2, Good=3, VeryGood=4.
    #[default]
    Ordinal,
    /// {NoAttempt, VeryPoor, Poor}=0, {Good, VeryGood}=1.
    Conflated,
}

impl RatingEncoding {
    pub fn encode(self, value: ResponseValue) -> Option<u8> {
        let ordinal = match value {
            ResponseValue::NoAttempt => 0,
            ResponseValue::VeryPoor => 1,
            ResponseValue::Poor => 2,
            ResponseValue::Good => 3,
            ResponseValue::VeryGood => 4,
            ResponseValue::GEN | ResponseValue::ED => return None,
        };
        Some(match self {
            RatingEncoding::Ordinal => ordinal,
            RatingEncoding::Conflated => u8::from(ordinal >= 3),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRow {
    pub dimension: Dimension,
    pub gen_count: u64,
    pub ed_count: u64,
    pub p_value: f64,
    pub star: String,
}

/// Counts per preference dimension with a one-sided binomial test (p0 = 0.5)
/// on the larger count.
pub fn preference_table(responses: &[SurveyResponse]) -> Vec<PreferenceRow> {
    Dimension::PREFERENCE
        .iter()
        .filter_map(|&dim| {
            let (mut gen, mut ed) = (0u64, 0u64);
            for r in responses.iter().filter(|r| r.kind == SurveyKind::Preference && r.dimension == dim) {
                match r.value {
                    ResponseValue::GEN => gen += 1,
                    ResponseValue::ED => ed += 1,
                    _ => {}
                }
            }
            let n = gen + ed;
            if n == 0 {
                return None;
            }
            let p = binomial_one_sided(gen.max(ed), n, 0.5).expect("valid bounds");
            Some(PreferenceRow {
                dimension: dim,
                gen_count: gen,
                ed_count: ed,
                p_value: p,
                star: star(p).to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingCell {
    pub strategy: Strategy,
    pub dimension: Dimension,
    pub n: usize,
    pub mean: f64,
    /// Mann-Whitney p against the column's lowest-mean strategy (one-sided,
    /// greater); absent for the lowest strategy itself.
    pub p_vs_lowest: Option<f64>,
    pub star: String,
}

/// Mean ratings per (strategy, dimension), each strategy compared against the
/// lowest-mean strategy of its column. `strategy_of` maps item ids to strategies.
pub fn rating_table(
    responses: &[SurveyResponse],
    strategy_of: &HashMap<String, Strategy>,
    encoding: RatingEncoding,
) -> Vec<RatingCell> {
    let mut cells: BTreeMap<(Dimension, Strategy), Vec<f64>> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.kind == SurveyKind::Rating) {
        let (Some(&strategy), Some(v)) = (strategy_of.get(&r.item_id), encoding.encode(r.value)) else {
            continue;
        };
        cells.entry((r.dimension, strategy)).or_default().push(f64::from(v));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut out = Vec::new();
    for dim in Dimension::RATING {
        let column: Vec<(Strategy, &Vec<f64>)> = Strategy::ALL
            .iter()
            .filter_map(|&s| cells.get(&(dim, s)).map(|v| (s, v)))
            .collect();
        let Some(&(lowest, lowest_vals)) = column
            .iter()
            .min_by(|x, y| mean(x.1).total_cmp(&mean(y.1)))
        else {
            continue;
        };
        for (strategy, vals) in &column {
            let p = (*strategy != lowest).then(|| {
                mann_whitney_u(vals, lowest_vals, Alternative::Greater)
                    .map(|r| r.p)
                    .unwrap_or(1.0)
            });
            out.push(RatingCell {
                strategy: *strategy,
                dimension: dim,
                n: vals.len(),
                mean: mean(vals),
                p_vs_lowest: p,
                star: p.map(star).unwrap_or("").to_string(),
            });
        }
    }
    out
}

/// Respondents whose ratings use fewer than `min_distinct` distinct values
/// over at least `min_items` answers.
pub fn degenerate_respondents(responses: &[SurveyResponse], min_distinct: usize, min_items: usize) -> BTreeSet<String> {
    let mut per: BTreeMap<&str, (usize, BTreeSet<ResponseValue>)> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.kind == SurveyKind::Rating) {
        let e = per.entry(r.respondent_id.as_str()).or_default();
        e.0 += 1;
        e.1.insert(r.value);
    }
    per.into_iter()
        .filter(|(_, (n, vals))| *n >= min_items && vals.len() < min_distinct)
        .map(|(id, _)| id.to_string())
        .collect()
}

/// Per-item value pairs for a dimension: for every item answered by two or
/// more respondents, the first two respondents (by id) form the pair.
fn double_annotations(responses: &[SurveyResponse], dim: Dimension) -> Vec<(ResponseValue, ResponseValue)> {
    let mut by_item: BTreeMap<&str, BTreeMap<&str, ResponseValue>> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.dimension == dim) {
        by_item.entry(&r.item_id).or_default().insert(&r.respondent_id, r.value);
    }
    by_item
        .values()
        .filter(|m| m.len() >= 2)
        .map(|m| {
            let mut it = m.values();
            (*it.next().expect("two"), *it.next().expect("two"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflationRow {
    pub dimension: Dimension,
    pub n_items: usize,
    pub kappa_raw: f64,
    pub rho_raw: Option<f64>,
    pub pct_raw: f64,
    pub kappa_confl: f64,
    pub rho_confl: Option<f64>,
    pub pct_confl: f64,
}

/// Agreement on the five-level and the conflated scale for each rating
/// dimension with double-annotated items.
pub fn conflation_analysis(responses: &[SurveyResponse]) -> Vec<ConflationRow> {
    Dimension::RATING
        .iter()
        .filter_map(|&dim| {
            let pairs = double_annotations(responses, dim);
            if pairs.is_empty() {
                return None;
            }
            let agree = |enc: RatingEncoding| -> Option<(f64, Option<f64>, f64)> {
                let a: Vec<u8> = pairs.iter().map(|p| enc.encode(p.0)).collect::<Option<_>>()?;
                let b: Vec<u8> = pairs.iter().map(|p| enc.encode(p.1)).collect::<Option<_>>()?;
                let k = cohens_kappa(&a, &b).ok()?;
                let af: Vec<f64> = a.iter().map(|&x| f64::from(x)).collect();
                let bf: Vec<f64> = b.iter().map(|&x| f64::from(x)).collect();
                Some((k.kappa, spearman_rho(&af, &bf).ok(), k.po))
            };
            let (kappa_raw, rho_raw, pct_raw) = agree(RatingEncoding::Ordinal)?;
            let (kappa_confl, rho_confl, pct_confl) = agree(RatingEncoding::Conflated)?;
            Some(ConflationRow {
                dimension: dim,
                n_items: pairs.len(),
                kappa_raw,
                rho_raw,
                pct_raw,
                kappa_confl,
                rho_confl,
                pct_confl,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa: f64,
    pub rho: Option<f64>,
    pub pct_agreement: f64,
    pub n_items: usize,
    pub n_pairs: usize,
}

/// Mean Cohen's kappa (and percentage agreement) over all annotator pairs,
/// each restricted to the items both labelled. Pairs without shared items
/// are skipped.
pub fn pairwise_average_kappa<K, L>(annotators: &BTreeMap<String, BTreeMap<K, L>>) -> Result<AgreementReport, StatsError>
where
    K: Ord,
    L: Eq + Hash,
{
    let ids: Vec<&String> = annotators.keys().collect();
    let mut kappas = Vec::new();
    let mut pcts = Vec::new();
    let mut n_items = 0;
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            let (x, y) = (&annotators[ids[i]], &annotators[ids[j]]);
            let (a, b): (Vec<&L>, Vec<&L>) = x
                .iter()
                .filter_map(|(item, la)| y.get(item).map(|lb| (la, lb)))
                .unzip();
            if a.is_empty() {
                continue;
            }
            let k = cohens_kappa(&a, &b)?;
            n_items += a.len();
            kappas.push(k.kappa);
            pcts.push(k.po);
        }
    }
    if kappas.is_empty() {
        return Err(StatsError::NoOverlap);
    }
    let m = kappas.len() as f64;
    Ok(AgreementReport {
        kappa: kappas.iter().sum::<f64>() / m,
        rho: None,
        pct_agreement: pcts.iter().sum::<f64>() / m,
        n_items,
        n_pairs: kappas.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceAgreementRow {
    pub dimension: Option<Dimension>,
    pub kappa: f64,
    pub pct_agreement: f64,
    pub n_items: usize,
}

/// Survey-1 agreement per dimension plus an overall row (dimension `None`)
/// pooling all dimensions.
pub fn preference_agreement(responses: &[SurveyResponse]) -> Vec<PreferenceAgreementRow> {
    let prefs: Vec<&SurveyResponse> = responses.iter().filter(|r| r.kind == SurveyKind::Preference).collect();
    let build = |dim: Option<Dimension>| -> Option<PreferenceAgreementRow> {
        let mut sets: BTreeMap<String, BTreeMap<(String, Dimension), ResponseValue>> = BTreeMap::new();
        for r in prefs.iter().filter(|r| dim.is_none_or(|d| r.dimension == d)) {
            sets.entry(r.respondent_id.clone())
                .or_default()
                .insert((r.item_id.clone(), r.dimension), r.value);
        }
        let rep = pairwise_average_kappa(&sets).ok()?;
        Some(PreferenceAgreementRow {
            dimension: dim,
            kappa: rep.kappa,
            pct_agreement: rep.pct_agreement,
            n_items: rep.n_items,
        })
    };
    Dimension::PREFERENCE
        .iter()
        .map(|&d| Some(d))
        .chain(std::iter::once(None))
        .filter_map(build)
        .collect()
}
