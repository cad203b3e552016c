//! Data model and line-delimited persistence.
//!
//! A corpus file holds one JSON object per line. Every line carries the
//! schema version `"v": 1` and a `"kind"` tag naming the entity type:
//!
//! ```text
//! {"v":1,"kind":"fc_article","id":"a1","url":"https://...",...}
//! {"v":1,"kind":"claim","id":"c1","text":"...","target_group":"women","source_article_id":"a1"}
//! ```
//!
//! Character offsets (ground spans) count Unicode scalar values.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TargetGroup {
    #[serde(rename = "Muslims")]
    Muslims,
    #[serde(rename = "LGBTQIA+")]
    Lgbtqia,
    #[serde(rename = "migrants")]
    Migrants,
    #[serde(rename = "women")]
    Women,
    #[serde(rename = "disabilities")]
    Disabilities,
    #[serde(rename = "Jews")]
    Jews,
}

impl TargetGroup {
    pub const ALL: [TargetGroup; 6] = [
        TargetGroup::Muslims,
        TargetGroup::Lgbtqia,
        TargetGroup::Migrants,
        TargetGroup::Women,
        TargetGroup::Disabilities,
        TargetGroup::Jews,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetGroup::Muslims => "Muslims",
            TargetGroup::Lgbtqia => "LGBTQIA+",
            TargetGroup::Migrants => "migrants",
            TargetGroup::Women => "women",
            TargetGroup::Disabilities => "disabilities",
            TargetGroup::Jews => "Jews",
        }
    }
}

impl fmt::Display for TargetGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TargetGroup::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown target group {s:?}"))
    }
}

/// Generation strategy. Ordering is FC < NGO < MIX, which is also the
/// order used by every report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    FC,
    NGO,
    MIX,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::FC, Strategy::NGO, Strategy::MIX];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::FC => "FC",
            Strategy::NGO => "NGO",
            Strategy::MIX => "MIX",
        }
    }

    /// Whether an annotator with `role` may post-edit items of this strategy.
    pub fn accepts_role(self, role: AnnotatorRole) -> bool {
        matches!(
            (self, role),
            (Strategy::FC, AnnotatorRole::FC)
                | (Strategy::NGO, AnnotatorRole::NGO)
                | (Strategy::MIX, _)
        )
    }

    pub fn needs_fc(self) -> bool {
        matches!(self, Strategy::FC | Strategy::MIX)
    }

    pub fn needs_ngo(self) -> bool {
        matches!(self, Strategy::NGO | Strategy::MIX)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FC" => Ok(Strategy::FC),
            "NGO" => Ok(Strategy::NGO),
            "MIX" => Ok(Strategy::MIX),
            _ => Err(format!("unknown strategy {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnnotatorRole {
    FC,
    NGO,
}

impl AnnotatorRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AnnotatorRole::FC => "FC",
            AnnotatorRole::NGO => "NGO",
        }
    }
}

impl fmt::Display for AnnotatorRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnnotatorRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FC" => Ok(AnnotatorRole::FC),
            "NGO" => Ok(AnnotatorRole::NGO),
            _ => Err(format!("unknown annotator role {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub text: String,
    pub target_group: TargetGroup,
    pub source_article_id: String,
}

/// Manual inclusion judgement recorded by a reviewer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionFlags {
    #[serde(default)]
    pub group_focused: bool,
    #[serde(default)]
    pub counters_false_claim: bool,
    #[serde(default)]
    pub contextualizes_true_claim: bool,
}

impl SelectionFlags {
    pub fn is_selected(&self) -> bool {
        self.group_focused && (self.counters_false_claim || self.contextualizes_true_claim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactCheckArticle {
    pub id: String,
    pub url: String,
    pub publisher: String,
    #[serde(default)]
    pub is_signatory: bool,
    pub claim_reviewed: String,
    #[serde(default)]
    pub verdict_text: String,
    pub body: String,
    #[serde(default)]
    pub matched_keywords: Vec<String>,
    #[serde(default)]
    pub selection: SelectionFlags,
}

impl FactCheckArticle {
    /// Signatory publisher and a positive manual selection.
    pub fn is_retained(&self) -> bool {
        self.is_signatory && self.selection.is_selected()
    }

    /// The text shown to annotators and inserted into prompts. Ground span
    /// offsets index into this string.
    pub fn document_text(&self) -> String {
        let mut text = format!("Claim: {}\nFact-checking: ", self.claim_reviewed);
        if !self.verdict_text.is_empty() {
            text.push_str(&self.verdict_text);
            text.push(' ');
        }
        text.push_str(&self.body);
        text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgoPair {
    pub myth: String,
    pub anti_stereotype: String,
}

impl NgoPair {
    pub fn render(&self) -> String {
        render_pair(&self.myth, &self.anti_stereotype)
    }
}

pub(crate) fn render_pair(myth: &str, anti_stereotype: &str) -> String {
    format!("Myth: {myth}\nAnti-stereotype: {anti_stereotype}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGOReport {
    pub id: String,
    pub source_url: String,
    pub target_group: TargetGroup,
    pub pairs: Vec<NgoPair>,
}

impl NGOReport {
    /// All pairs rendered one after the other, separated by a blank line.
    pub fn document_text(&self) -> String {
        self.pairs
            .iter()
            .map(NgoPair::render)
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundlePair {
    pub report_id: String,
    pub pair_index: usize,
    pub myth: String,
    pub anti_stereotype: String,
    pub similarity: f64,
}

/// A claim joined with its fact-checking article and the NGO pairs matched
/// to it, in match order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBundle {
    pub claim_id: String,
    pub fc_article_id: String,
    #[serde(default)]
    pub ngo_pairs: Vec<BundlePair>,
}

impl KnowledgeBundle {
    /// Concatenation of the matched pairs, the NGO knowledge given to the model.
    pub fn ngo_text(&self) -> String {
        self.ngo_pairs
            .iter()
            .map(|p| render_pair(&p.myth, &p.anti_stereotype))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Distinct report ids in first-seen order.
    pub fn report_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.ngo_pairs
            .iter()
            .map(|p| p.report_id.as_str())
            .filter(|id| seen.insert(*id))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Fc,
    Ngo,
}

impl fmt::Display for DocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DocKind::Fc => "fc",
            DocKind::Ngo => "ngo",
        })
    }
}

/// Half-open character range `[start, end)` of a knowledge document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundSpan {
    pub doc_id: String,
    pub doc_kind: DocKind,
    pub start: usize,
    pub end: usize,
}

impl GroundSpan {
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Extract the covered text from `doc`. Returns `None` when out of bounds.
    pub fn slice<'a>(&self, doc: &'a str) -> Option<&'a str> {
        let start = char_to_byte(doc, self.start)?;
        let end = char_to_byte(doc, self.end)?;
        (start < end).then(|| &doc[start..end])
    }
}

fn char_to_byte(s: &str, char_offset: usize) -> Option<usize> {
    if char_offset == 0 {
        return Some(0);
    }
    match s.char_indices().nth(char_offset) {
        Some((b, _)) => Some(b),
        None if s.chars().count() == char_offset => Some(s.len()),
        None => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub struct CSRecord {
    pub id: String,
    pub claim_id: String,
    pub strategy: Strategy,
    pub generated_text: String,
    #[serde(default)]
    pub edited_text: Option<String>,
    #[serde(default)]
    pub annotator_role: Option<AnnotatorRole>,
    #[serde(default)]
    pub ground_spans: Vec<GroundSpan>,
    #[serde(default)]
    pub comments: Option<String>,
    #[serde(default)]
    pub edited_at: Option<DateTime<Utc>>,
}

impl CSRecord {
    /// Conventional record id for a (claim, strategy) pair.
    pub fn make_id(claim_id: &str, strategy: Strategy) -> String {
        format!("{claim_id}:{}", strategy.as_str().to_ascii_lowercase())
    }

    pub fn is_edited(&self) -> bool {
        self.edited_text.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurveyKind {
    Preference,
    Rating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    Guidelines,
    Exhaustiveness,
    Naturalness,
    FACT,
    STER,
    EMP,
    DISC,
}

impl Dimension {
    pub const PREFERENCE: [Dimension; 3] = [
        Dimension::Guidelines,
        Dimension::Exhaustiveness,
        Dimension::Naturalness,
    ];
    pub const RATING: [Dimension; 4] = [
        Dimension::FACT,
        Dimension::STER,
        Dimension::EMP,
        Dimension::DISC,
    ];

    pub fn kind(self) -> SurveyKind {
        if Dimension::PREFERENCE.contains(&self) {
            SurveyKind::Preference
        } else {
            SurveyKind::Rating
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Survey answer. `GEN`/`ED` for preference items, the five-level ordinal
/// scale for ratings (declared low to high).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResponseValue {
    GEN,
    ED,
    NoAttempt,
    VeryPoor,
    Poor,
    Good,
    VeryGood,
}

impl ResponseValue {
    pub const RATING_SCALE: [ResponseValue; 5] = [
        ResponseValue::NoAttempt,
        ResponseValue::VeryPoor,
        ResponseValue::Poor,
        ResponseValue::Good,
        ResponseValue::VeryGood,
    ];

    pub fn kind(self) -> SurveyKind {
        match self {
            ResponseValue::GEN | ResponseValue::ED => SurveyKind::Preference,
            _ => SurveyKind::Rating,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub respondent_id: String,
    pub item_id: String,
    pub kind: SurveyKind,
    pub dimension: Dimension,
    pub value: ResponseValue,
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Entity {
    FcArticle(FactCheckArticle),
    NgoReport(NGOReport),
    Claim(Claim),
    Bundle(KnowledgeBundle),
    CsRecord(CSRecord),
    #[serde(rename = "survey_response")]
    Survey(SurveyResponseLine),
}

/// `SurveyResponse` already has a field called `kind`, which collides with
/// the line tag; on disk it is stored as `survey_kind`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponseLine {
    pub respondent_id: String,
    pub item_id: String,
    pub survey_kind: SurveyKind,
    pub dimension: Dimension,
    pub value: ResponseValue,
}

impl From<SurveyResponse> for SurveyResponseLine {
    fn from(r: SurveyResponse) -> Self {
        SurveyResponseLine {
            respondent_id: r.respondent_id,
            item_id: r.item_id,
            survey_kind: r.kind,
            dimension: r.dimension,
            value: r.value,
        }
    }
}

impl From<SurveyResponseLine> for SurveyResponse {
    fn from(r: SurveyResponseLine) -> Self {
        SurveyResponse {
            respondent_id: r.respondent_id,
            item_id: r.item_id,
            kind: r.survey_kind,
            dimension: r.dimension,
            value: r.value,
        }
    }
}

impl Entity {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Entity::FcArticle(_) => "fc_article",
            Entity::NgoReport(_) => "ngo_report",
            Entity::Claim(_) => "claim",
            Entity::Bundle(_) => "bundle",
            Entity::CsRecord(_) => "cs_record",
            Entity::Survey(_) => "survey_response",
        }
    }

    pub fn id(&self) -> String {
        match self {
            Entity::FcArticle(a) => a.id.clone(),
            Entity::NgoReport(r) => r.id.clone(),
            Entity::Claim(c) => c.id.clone(),
            Entity::Bundle(b) => b.claim_id.clone(),
            Entity::CsRecord(r) => r.id.clone(),
            Entity::Survey(s) => format!("{}/{}/{}", s.respondent_id, s.item_id, s.dimension),
        }
    }
}

#[derive(Serialize)]
struct LineOut<'a> {
    v: u64,
    #[serde(flatten)]
    entity: &'a Entity,
}

/// A broken rule on a single entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: String,
    pub id: String,
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(entity: &Entity, field: &str, rule: impl Into<String>) -> Self {
        Violation {
            kind: entity.kind_name().to_string(),
            id: entity.id(),
            field: field.to_string(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?}: {}: {}", self.kind, self.id, self.field, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("{kind} {id:?} references missing {target} {missing:?}")]
    Dangling {
        kind: String,
        id: String,
        target: String,
        missing: String,
    },
    #[error("{} invariant violation(s), first: {}", .0.len(), .0[0])]
    Invariant(Vec<Violation>),
}

/// Per-entity invariants that can be checked without the rest of the corpus.
pub fn validate_record(entity: &Entity) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |ok: bool, field: &str, rule: &str| {
        if !ok {
            out.push(Violation::new(entity, field, rule));
        }
    };
    match entity {
        Entity::Claim(c) => {
            check(!c.id.is_empty(), "id", "non-empty");
            check(!c.text.trim().is_empty(), "text", "non-empty");
            check(!c.source_article_id.is_empty(), "source_article_id", "non-empty");
        }
        Entity::FcArticle(a) => {
            check(!a.id.is_empty(), "id", "non-empty");
            check(
                url::Url::parse(&a.url).is_ok(),
                "url",
                "absolute url",
            );
            check(!a.body.trim().is_empty(), "body", "non-empty");
        }
        Entity::NgoReport(r) => {
            check(!r.id.is_empty(), "id", "non-empty");
            check(!r.pairs.is_empty(), "pairs", "non-empty");
            for pair in &r.pairs {
                check(!pair.myth.trim().is_empty(), "pairs.myth", "non-empty");
                check(
                    !pair.anti_stereotype.trim().is_empty(),
                    "pairs.anti_stereotype",
                    "non-empty",
                );
            }
            check(
                url::Url::parse(&r.source_url).is_ok(),
                "source_url",
                "absolute url",
            );
        }
        Entity::Bundle(b) => {
            for p in &b.ngo_pairs {
                check(
                    p.similarity.is_finite() && (-1.0..=1.0).contains(&p.similarity),
                    "ngo_pairs.similarity",
                    "similarity in [-1, 1]",
                );
            }
        }
        Entity::CsRecord(r) => {
            check(!r.id.is_empty(), "id", "non-empty");
            check(
                r.edited_text.is_some() == r.annotator_role.is_some(),
                "edited_text",
                "edited_text present iff annotator_role present",
            );
            if let Some(role) = r.annotator_role {
                check(
                    r.strategy.accepts_role(role),
                    "annotator_role",
                    "role/strategy mismatch",
                );
            }
            for span in &r.ground_spans {
                check(span.start < span.end, "ground_spans", "start < end");
            }
        }
        Entity::Survey(s) => {
            check(
                s.dimension.kind() == s.survey_kind,
                "dimension",
                "dimension set matches kind",
            );
            check(
                s.value.kind() == s.survey_kind,
                "value",
                "value domain matches kind",
            );
        }
    }
    out
}

/// Plain entity collections, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusParts {
    pub articles: Vec<FactCheckArticle>,
    pub reports: Vec<NGOReport>,
    pub claims: Vec<Claim>,
    pub bundles: Vec<KnowledgeBundle>,
    pub records: Vec<CSRecord>,
    pub responses: Vec<SurveyResponse>,
}

impl CorpusParts {
    fn push(&mut self, entity: Entity) {
        match entity {
            Entity::FcArticle(a) => self.articles.push(a),
            Entity::NgoReport(r) => self.reports.push(r),
            Entity::Claim(c) => self.claims.push(c),
            Entity::Bundle(b) => self.bundles.push(b),
            Entity::CsRecord(r) => self.records.push(r),
            Entity::Survey(s) => self.responses.push(s.into()),
        }
    }

    fn entities(&self) -> impl Iterator<Item = Entity> + '_ {
        let articles = self.articles.iter().cloned().map(Entity::FcArticle);
        let reports = self.reports.iter().cloned().map(Entity::NgoReport);
        let claims = self.claims.iter().cloned().map(Entity::Claim);
        let bundles = self.bundles.iter().cloned().map(Entity::Bundle);
        let records = self.records.iter().cloned().map(Entity::CsRecord);
        let responses = self
            .responses
            .iter()
            .cloned()
            .map(|r| Entity::Survey(r.into()));
        articles
            .chain(reports)
            .chain(claims)
            .chain(bundles)
            .chain(records)
            .chain(responses)
    }
}

/// Validated, indexed, immutable corpus aggregate.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    parts: CorpusParts,
    articles: HashMap<String, usize>,
    reports: HashMap<String, usize>,
    claims: HashMap<String, usize>,
    bundles: HashMap<String, usize>,
    records: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.parts == other.parts
    }
}

fn index_unique<'a>(
    kind: &str,
    ids: impl Iterator<Item = &'a str>,
    violations: &mut Vec<Violation>,
) -> HashMap<String, usize> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if map.insert(id.to_string(), i).is_some() {
            violations.push(Violation {
                kind: kind.to_string(),
                id: id.to_string(),
                field: "id".into(),
                rule: "unique id".into(),
            });
        }
    }
    map
}

fn dangling(kind: &str, id: &str, target: &str, missing: &str) -> CorpusError {
    CorpusError::Dangling {
        kind: kind.into(),
        id: id.into(),
        target: target.into(),
        missing: missing.into(),
    }
}

impl Corpus {
    pub fn empty() -> Self {
        Corpus::default()
    }

    /// Validate every invariant and resolve cross references.
    pub fn from_parts(parts: CorpusParts) -> Result<Self, CorpusError> {
        let mut violations: Vec<Violation> =
            parts.entities().flat_map(|e| validate_record(&e)).collect();

        let articles = index_unique("fc_article", parts.articles.iter().map(|a| a.id.as_str()), &mut violations);
        let reports = index_unique("ngo_report", parts.reports.iter().map(|r| r.id.as_str()), &mut violations);
        let claims = index_unique("claim", parts.claims.iter().map(|c| c.id.as_str()), &mut violations);
        let bundles = index_unique("bundle", parts.bundles.iter().map(|b| b.claim_id.as_str()), &mut violations);
        let records = index_unique("cs_record", parts.records.iter().map(|r| r.id.as_str()), &mut violations);

        for c in &parts.claims {
            if !articles.contains_key(&c.source_article_id) {
                return Err(dangling("claim", &c.id, "fc_article", &c.source_article_id));
            }
        }
        for b in &parts.bundles {
            if !claims.contains_key(&b.claim_id) {
                return Err(dangling("bundle", &b.claim_id, "claim", &b.claim_id));
            }
            if !articles.contains_key(&b.fc_article_id) {
                return Err(dangling("bundle", &b.claim_id, "fc_article", &b.fc_article_id));
            }
            for p in &b.ngo_pairs {
                let Some(&ri) = reports.get(&p.report_id) else {
                    return Err(dangling("bundle", &b.claim_id, "ngo_report", &p.report_id));
                };
                if p.pair_index >= parts.reports[ri].pairs.len() {
                    violations.push(Violation {
                        kind: "bundle".into(),
                        id: b.claim_id.clone(),
                        field: "ngo_pairs.pair_index".into(),
                        rule: format!("pair index within report {}", p.report_id),
                    });
                }
            }
        }

        let mut seen_pairs = HashSet::new();
        for r in &parts.records {
            if !claims.contains_key(&r.claim_id) {
                return Err(dangling("cs_record", &r.id, "claim", &r.claim_id));
            }
            if !seen_pairs.insert((r.claim_id.as_str(), r.strategy)) {
                violations.push(Violation {
                    kind: "cs_record".into(),
                    id: r.id.clone(),
                    field: "strategy".into(),
                    rule: "at most one record per (claim, strategy)".into(),
                });
            }
            let bundle = bundles.get(&r.claim_id).map(|&i| &parts.bundles[i]);
            for span in &r.ground_spans {
                let doc_text = match span.doc_kind {
                    DocKind::Fc => match articles.get(&span.doc_id) {
                        Some(&i) => parts.articles[i].document_text(),
                        None => return Err(dangling("cs_record", &r.id, "fc_article", &span.doc_id)),
                    },
                    DocKind::Ngo => match reports.get(&span.doc_id) {
                        Some(&i) => parts.reports[i].document_text(),
                        None => return Err(dangling("cs_record", &r.id, "ngo_report", &span.doc_id)),
                    },
                };
                let len = doc_text.chars().count();
                if span.end > len {
                    violations.push(Violation {
                        kind: "cs_record".into(),
                        id: r.id.clone(),
                        field: "ground_spans".into(),
                        rule: format!(
                            "span [{}, {}) within document {} of length {len}",
                            span.start, span.end, span.doc_id
                        ),
                    });
                }
                let in_bundle = bundle.is_some_and(|b| match span.doc_kind {
                    DocKind::Fc => b.fc_article_id == span.doc_id,
                    DocKind::Ngo => b.ngo_pairs.iter().any(|p| p.report_id == span.doc_id),
                });
                if !in_bundle {
                    violations.push(Violation {
                        kind: "cs_record".into(),
                        id: r.id.clone(),
                        field: "ground_spans".into(),
                        rule: format!("document {} belongs to the claim's bundle", span.doc_id),
                    });
                }
            }
        }

        for s in &parts.responses {
            if !records.contains_key(&s.item_id) {
                return Err(dangling("survey_response", &s.respondent_id, "cs_record", &s.item_id));
            }
        }

        if !violations.is_empty() {
            return Err(CorpusError::Invariant(violations));
        }
        Ok(Corpus {
            parts,
            articles,
            reports,
            claims,
            bundles,
            records,
        })
    }

    pub fn parts(&self) -> &CorpusParts {
        &self.parts
    }

    pub fn into_parts(self) -> CorpusParts {
        self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts == CorpusParts::default()
    }

    pub fn claims(&self) -> &[Claim] {
        &self.parts.claims
    }

    pub fn articles(&self) -> &[FactCheckArticle] {
        &self.parts.articles
    }

    pub fn reports(&self) -> &[NGOReport] {
        &self.parts.reports
    }

    pub fn bundles(&self) -> &[KnowledgeBundle] {
        &self.parts.bundles
    }

    pub fn records(&self) -> &[CSRecord] {
        &self.parts.records
    }

    pub fn responses(&self) -> &[SurveyResponse] {
        &self.parts.responses
    }

    pub fn claim(&self, id: &str) -> Option<&Claim> {
        self.claims.get(id).map(|&i| &self.parts.claims[i])
    }

    pub fn article(&self, id: &str) -> Option<&FactCheckArticle> {
        self.articles.get(id).map(|&i| &self.parts.articles[i])
    }

    pub fn report(&self, id: &str) -> Option<&NGOReport> {
        self.reports.get(id).map(|&i| &self.parts.reports[i])
    }

    pub fn bundle(&self, claim_id: &str) -> Option<&KnowledgeBundle> {
        self.bundles.get(claim_id).map(|&i| &self.parts.bundles[i])
    }

    pub fn record(&self, id: &str) -> Option<&CSRecord> {
        self.records.get(id).map(|&i| &self.parts.records[i])
    }

    /// Text of a knowledge document as annotators see it.
    pub fn document_text(&self, kind: DocKind, doc_id: &str) -> Option<String> {
        match kind {
            DocKind::Fc => self.article(doc_id).map(FactCheckArticle::document_text),
            DocKind::Ngo => self.report(doc_id).map(NGOReport::document_text),
        }
    }

    /// Record counts per entity kind, keyed by the on-disk tag.
    pub fn counts(&self) -> BTreeMap<&'static str, usize> {
        BTreeMap::from([
            ("fc_article", self.parts.articles.len()),
            ("ngo_report", self.parts.reports.len()),
            ("claim", self.parts.claims.len()),
            ("bundle", self.parts.bundles.len()),
            ("cs_record", self.parts.records.len()),
            ("survey_response", self.parts.responses.len()),
        ])
    }
}

/// Renames applied to a foreign dataset before it is parsed.
///
/// `kinds` maps a foreign kind tag to ours; `fields` maps, per (our) kind,
/// foreign field names to ours. Lines without a `v` field are accepted as
/// version 1 when a mapping is in use.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMapping {
    #[serde(default)]
    pub kind_field: Option<String>,
    #[serde(default)]
    pub kinds: HashMap<String, String>,
    #[serde(default)]
    pub fields: HashMap<String, HashMap<String, String>>,
}

impl FieldMapping {
    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CorpusError::Malformed {
            line: e.line(),
            message: format!("field mapping: {e}"),
        })
    }

    fn apply(&self, value: &mut Value) {
        let Value::Object(map) = value else { return };
        if let Some(kind_field) = &self.kind_field {
            if let Some(kind) = map.remove(kind_field) {
                map.insert("kind".into(), kind);
            }
        }
        if let Some(Value::String(kind)) = map.get("kind").cloned() {
            let kind = self.kinds.get(&kind).cloned().unwrap_or(kind);
            if let Some(renames) = self.fields.get(&kind) {
                for (from, to) in renames {
                    if let Some(v) = map.remove(from) {
                        map.insert(to.clone(), v);
                    }
                }
            }
            map.insert("kind".into(), Value::String(kind));
        }
        map.entry("v").or_insert(Value::from(SCHEMA_VERSION));
    }
}

fn parse_line(line_no: usize, line: &str, mapping: Option<&FieldMapping>) -> Result<Entity, CorpusError> {
    let malformed = |message: String| CorpusError::Malformed { line: line_no, message };
    let mut value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    if let Some(m) = mapping {
        m.apply(&mut value);
    }
    match value.get("v").and_then(Value::as_u64) {
        Some(SCHEMA_VERSION) => {}
        Some(v) => return Err(malformed(format!("unsupported schema version {v}"))),
        None => return Err(malformed("missing schema version field \"v\"".into())),
    }
    if let Value::Object(map) = &mut value {
        map.remove("v");
    }
    serde_json::from_value(value).map_err(|e| malformed(e.to_string()))
}

/// Parse corpus text (one record per line; blank lines ignored).
pub fn parse_corpus(text: &str, mapping: Option<&FieldMapping>) -> Result<Corpus, CorpusError> {
    let mut parts = CorpusParts::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        parts.push(parse_line(i + 1, line, mapping)?);
    }
    Corpus::from_parts(parts)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    load_corpus_with(path, None)
}

pub fn load_corpus_with(path: &Path, mapping: Option<&FieldMapping>) -> Result<Corpus, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut parts = CorpusParts::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        parts.push(parse_line(i + 1, &line, mapping)?);
    }
    Corpus::from_parts(parts)
}

/// Serialize to the line format. Output is byte-stable for equal corpora.
pub fn to_jsonl(corpus: &Corpus) -> String {
    let mut out = String::new();
    for entity in corpus.parts.entities() {
        let line = serde_json::to_string(&LineOut {
            v: SCHEMA_VERSION,
            entity: &entity,
        })
        .expect("corpus entities serialize");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Write atomically: the target is replaced only once the full file is on disk.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    write_atomic(path, to_jsonl(corpus).as_bytes()).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}


#[cfg(test)]
pub(crate) use tests::sample_parts;
