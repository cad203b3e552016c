//! Corpus-wide result tables and their plain-text rendering.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use counterkit::corpus::SurveyKind;
use counterkit::editmetrics::{edit_effort_report, EditEffortReport};
use counterkit::stats::{
    conflation_analysis, degenerate_respondents, preference_agreement, preference_table, rating_table, ConflationRow,
    PreferenceAgreementRow, PreferenceRow, RatingCell, RatingEncoding,
};
use counterkit::textmetrics::{quality_report, CorpusTag, ParseIndex, RrConfig, TextQualityReport};
use counterkit::{AnnotatorRole, Corpus, Strategy, SurveyResponse};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Respondents using fewer distinct rating values than this over at least
/// [`DEGENERATE_MIN_ITEMS`] answers are left out of agreement figures.
pub const DEGENERATE_MIN_DISTINCT: usize = 3;
pub const DEGENERATE_MIN_ITEMS: usize = 8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTables {
    pub preferences: Vec<PreferenceRow>,
    pub agreement: Vec<PreferenceAgreementRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatingTables {
    pub ratings: Vec<RatingCell>,
    pub agreement: Vec<ConflationRow>,
    /// Respondents left out of `agreement` for degenerate answer patterns.
    pub excluded_respondents: Vec<String>,
}

pub fn preference_tables(responses: &[SurveyResponse]) -> PreferenceTables {
    let prefs: Vec<SurveyResponse> = responses.iter().filter(|r| r.kind == SurveyKind::Preference).cloned().collect();
    PreferenceTables { preferences: preference_table(&prefs), agreement: preference_agreement(&prefs) }
}

/// Rating means per strategy and rating agreement. `strategy_of` maps survey
/// item ids (record ids) to their strategy.
pub fn rating_tables(responses: &[SurveyResponse], strategy_of: &HashMap<String, Strategy>) -> RatingTables {
    let ratings: Vec<SurveyResponse> = responses.iter().filter(|r| r.kind == SurveyKind::Rating).cloned().collect();
    let excluded = degenerate_respondents(&ratings, DEGENERATE_MIN_DISTINCT, DEGENERATE_MIN_ITEMS);
    let kept: Vec<SurveyResponse> = ratings.iter().filter(|r| !excluded.contains(&r.respondent_id)).cloned().collect();
    RatingTables {
        ratings: rating_table(&ratings, strategy_of, RatingEncoding::Ordinal),
        agreement: conflation_analysis(&kept),
        excluded_respondents: excluded.into_iter().collect(),
    }
}

pub fn strategy_index(corpus: &Corpus) -> HashMap<String, Strategy> {
    corpus.records().iter().map(|r| (r.id.clone(), r.strategy)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntacticRow {
    pub strategy: Strategy,
    pub role: AnnotatorRole,
    pub corpus_tag: CorpusTag,
    pub n: usize,
    pub asd: f64,
    pub msd: f64,
    pub nst: f64,
}

/// Every table derivable from a corpus (plus optional parses).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub counts: BTreeMap<String, usize>,
    pub edit_effort: Vec<EditEffortReport>,
    pub text_quality: Vec<TextQualityReport>,
    pub syntactic: Vec<SyntacticRow>,
    pub preference: PreferenceTables,
    pub rating: RatingTables,
}

pub fn build_report(corpus: &Corpus, parses: Option<&ParseIndex>, rr_seed: u64) -> Result<Report, CliError> {
    let records = corpus.records();
    let edit_effort = edit_effort_report(records).map_err(|e| CliError::Data(e.to_string()))?;
    let text_quality =
        quality_report(records, parses, rr_seed, &RrConfig::default()).map_err(|e| CliError::Data(e.to_string()))?;
    let syntactic = syntactic_rows(&text_quality);
    let responses = corpus.responses();
    Ok(Report {
        counts: corpus.counts().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        edit_effort,
        text_quality,
        syntactic,
        preference: preference_tables(responses),
        rating: rating_tables(responses, &strategy_index(corpus)),
    })
}

pub fn syntactic_rows(quality: &[TextQualityReport]) -> Vec<SyntacticRow> {
    quality
        .iter()
        .filter_map(|q| {
            Some(SyntacticRow {
                strategy: q.strategy,
                role: q.role,
                corpus_tag: q.corpus_tag,
                n: q.n,
                asd: q.asd?,
                msd: q.msd?,
                nst: q.nst?,
            })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

fn table(out: &mut String, title: &str, header: &[&str], rows: Vec<Vec<String>>) {
    let _ = writeln!(out, "{title}");
    if rows.is_empty() {
        let _ = writeln!(out, "  (no data)\n");
        return;
    }
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        format!("  {}", padded.join("  "))
    };
    let _ = writeln!(out, "{}", line(header.iter().map(|h| h.to_string()).collect()));
    for r in rows {
        let _ = writeln!(out, "{}", line(r));
    }
    out.push('\n');
}

pub fn render_edit_effort(out: &mut String, rows: &[EditEffortReport], hter_mark: f64) {
    let rows = rows
        .iter()
        .map(|r| {
            let mark = if r.hter >= hter_mark { "+" } else { "" };
            vec![
                r.config.to_string(),
                r.role.to_string(),
                r.n.to_string(),
                format!("{:.1}", r.p_mod),
                format!("{:.3}{mark}", r.hter),
                fmt_opt(r.hter_m, 3),
            ]
        })
        .collect();
    table(out, "Post-editing effort", &["config", "role", "n", "p_mod", "HTER", "HTER_m"], rows);
}

pub fn render_text_quality(out: &mut String, rows: &[TextQualityReport]) {
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                r.strategy.to_string(),
                r.role.to_string(),
                format!("{:?}", r.corpus_tag).to_lowercase(),
                r.n.to_string(),
                format!("{:.3}", r.rr),
                format!("{:.2}", r.fres),
                format!("{:.2}", r.fkg),
                format!("{:.3}", r.cw),
            ]
        })
        .collect();
    table(out, "Text quality", &["config", "role", "side", "n", "RR", "FRES", "FKG", "CW"], rows);
}

pub fn render_syntactic(out: &mut String, rows: &[SyntacticRow]) {
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                r.strategy.to_string(),
                r.role.to_string(),
                format!("{:?}", r.corpus_tag).to_lowercase(),
                r.n.to_string(),
                format!("{:.3}", r.asd),
                format!("{:.3}", r.msd),
                format!("{:.2}", r.nst),
            ]
        })
        .collect();
    table(out, "Syntactic depth", &["config", "role", "side", "n", "ASD", "MSD", "NST"], rows);
}

pub fn render_preference(out: &mut String, t: &PreferenceTables) {
    let rows = t
        .preferences
        .iter()
        .map(|r| {
            let n = (r.gen_count + r.ed_count).max(1) as f64;
            vec![
                r.dimension.to_string(),
                format!("{} ({:.0}%)", r.gen_count, 100.0 * r.gen_count as f64 / n),
                format!("{} ({:.0}%)", r.ed_count, 100.0 * r.ed_count as f64 / n),
                format!("{:.2e}", r.p_value),
                r.star.clone(),
            ]
        })
        .collect();
    table(out, "Preferences (generated vs edited)", &["dimension", "GEN", "ED", "p", ""], rows);
    let rows = t
        .agreement
        .iter()
        .map(|r| {
            vec![
                r.dimension.map_or_else(|| "overall".to_string(), |d| d.to_string()),
                r.n_items.to_string(),
                format!("{:.2}", r.kappa),
                format!("{:.2}", r.pct_agreement),
            ]
        })
        .collect();
    table(out, "Preference agreement", &["dimension", "items", "kappa", "agreement"], rows);
}

pub fn render_rating(out: &mut String, t: &RatingTables) {
    let rows = t
        .ratings
        .iter()
        .map(|r| {
            vec![
                r.strategy.to_string(),
                r.dimension.to_string(),
                r.n.to_string(),
                format!("{:.3}{}", r.mean, r.star),
                fmt_opt(r.p_vs_lowest, 4),
            ]
        })
        .collect();
    table(out, "Mean ratings", &["config", "dimension", "n", "mean", "p vs lowest"], rows);
    let rows = t
        .agreement
        .iter()
        .map(|r| {
            vec![
                r.dimension.to_string(),
                r.n_items.to_string(),
                format!("{:.2}", r.kappa_raw),
                fmt_opt(r.rho_raw, 2),
                format!("{:.2}", r.pct_raw),
                format!("{:.2}", r.kappa_confl),
                fmt_opt(r.rho_confl, 2),
                format!("{:.2}", r.pct_confl),
            ]
        })
        .collect();
    table(
        out,
        "Rating agreement (five-level / conflated)",
        &["dimension", "items", "kappa", "rho", "agree", "kappa_c", "rho_c", "agree_c"],
        rows,
    );
    if !t.excluded_respondents.is_empty() {
        let _ = writeln!(out, "  excluded respondents: {}\n", t.excluded_respondents.join(", "));
    }
}

pub fn render_report(report: &Report, hter_mark: f64) -> String {
    let mut out = String::new();
    let counts: Vec<String> = report.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let _ = writeln!(out, "Corpus: {}\n", counts.join(" "));
    render_edit_effort(&mut out, &report.edit_effort, hter_mark);
    render_text_quality(&mut out, &report.text_quality);
    render_syntactic(&mut out, &report.syntactic);
    render_preference(&mut out, &report.preference);
    render_rating(&mut out, &report.rating);
    out
}
