//! Post-editing session store: role-based assignment with leases, edit
//! submission with ground-text spans, progress and provenance analysis.
//!
//! All mutations go through one lock (a single writer). A submission is
//! written to disk before it is acknowledged; leases live in memory only, so
//! a restart returns in-progress items to the pool but keeps every
//! submitted edit.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{save_corpus, AnnotatorRole, CSRecord, Corpus, CorpusError, DocKind, GroundSpan, Strategy};
use crate::editmetrics::hter_pair;
use crate::genstrat::{GuidelineText, PromptBook};

pub const DEFAULT_LEASE_HOURS: i64 = 24;

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("unknown annotator {0}")]
    UnknownAnnotator(String),
    #[error("annotator {0} already exists with a different role")]
    RoleConflict(String),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("no eligible items for annotator {annotator} (role {role})")]
    NoEligible { annotator: String, role: AnnotatorRole },
    #[error("all items are assigned or submitted")]
    NothingLeft,
    #[error("item {item} is not held by annotator {annotator}")]
    NotHeld { item: String, annotator: String },
    #[error("item {0} has already been submitted")]
    Duplicate(String),
    #[error("edited text is empty")]
    EmptyEdit,
    #[error("span {start}..{end} is out of bounds for document {doc_id} (length {len})")]
    SpanOutOfBounds { doc_id: String, start: usize, end: usize, len: usize },
    #[error("document {doc_id} ({kind:?}) is not part of item {item}")]
    UnknownDocument { item: String, doc_id: String, kind: DocKind },
    #[error("record update rejected: {0}")]
    Corpus(#[from] CorpusError),
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Settable clock for tests and simulations.
#[derive(Debug)]
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(t: DateTime<Utc>) -> Self {
        ManualClock(Mutex::new(t))
    }

    pub fn advance(&self, d: Duration) {
        let mut t = self.0.lock().expect("clock poisoned");
        *t += d;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().expect("clock poisoned")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub id: String,
    pub role: AnnotatorRole,
    #[serde(default)]
    pub display_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentState {
    Pending,
    InProgress,
    Submitted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub annotator_id: String,
    pub item_id: String,
    pub state: AssignmentState,
    pub leased_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentPayload {
    pub doc_id: String,
    pub doc_kind: DocKind,
    /// The exact text span offsets refer to (Unicode scalar values).
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemPayload {
    pub item_id: String,
    pub claim_id: String,
    pub claim: String,
    pub strategy: Strategy,
    pub generated_text: String,
    pub documents: Vec<DocumentPayload>,
    pub guidelines: GuidelineText,
    pub lease_expires_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub payload: ItemPayload,
    pub state: AssignmentState,
    pub annotator_id: Option<String>,
    pub record: CSRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitEdit {
    pub annotator_id: String,
    pub edited_text: String,
    #[serde(default)]
    pub ground_spans: Vec<GroundSpan>,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub accepted: bool,
    pub item_id: String,
    pub live_hter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkbenchConfig {
    /// Where every accepted submission is persisted; `None` keeps it in memory.
    pub corpus_path: Option<PathBuf>,
    pub lease_hours: i64,
    /// Cap on MIX items each role may take.
    #[serde(default)]
    pub mix_quota: BTreeMap<AnnotatorRole, usize>,
    #[serde(default)]
    pub book: PromptBook,
}

impl Default for WorkbenchConfig {
    fn default() -> Self {
        WorkbenchConfig {
            corpus_path: None,
            lease_hours: DEFAULT_LEASE_HOURS,
            mix_quota: BTreeMap::new(),
            book: PromptBook::default(),
        }
    }
}

struct State {
    corpus: Corpus,
    annotators: BTreeMap<String, AnnotatorProfile>,
    /// In-progress leases keyed by item id.
    leases: BTreeMap<String, Assignment>,
    /// Annotator of every submission made in this process.
    submitted_by: HashMap<String, String>,
}

pub struct Workbench {
    state: Mutex<State>,
    clock: Arc<dyn Clock>,
    config: WorkbenchConfig,
}

/// Knowledge documents an item's annotator sees, FC article first.
pub fn item_documents(corpus: &Corpus, record: &CSRecord) -> Vec<DocumentPayload> {
    let mut docs = Vec::new();
    let claim = corpus.claim(&record.claim_id);
    let bundle = corpus.bundle(&record.claim_id);
    if record.strategy.needs_fc() {
        let fc_id = bundle
            .map(|b| b.fc_article_id.clone())
            .or_else(|| claim.map(|c| c.source_article_id.clone()));
        if let Some(text) = fc_id.as_deref().and_then(|id| corpus.document_text(DocKind::Fc, id)) {
            docs.push(DocumentPayload { doc_id: fc_id.unwrap_or_default(), doc_kind: DocKind::Fc, text });
        }
    }
    if record.strategy.needs_ngo() {
        if let Some(b) = bundle {
            for id in b.report_ids() {
                if let Some(text) = corpus.document_text(DocKind::Ngo, id) {
                    docs.push(DocumentPayload { doc_id: id.to_string(), doc_kind: DocKind::Ngo, text });
                }
            }
        }
    }
    docs
}

impl Workbench {
    pub fn new(corpus: Corpus, annotators: Vec<AnnotatorProfile>, config: WorkbenchConfig, clock: Arc<dyn Clock>) -> Self {
        Workbench {
            state: Mutex::new(State {
                corpus,
                annotators: annotators.into_iter().map(|a| (a.id.clone(), a)).collect(),
                leases: BTreeMap::new(),
                submitted_by: HashMap::new(),
            }),
            clock,
            config,
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().expect("workbench state poisoned")
    }

    fn lease(&self) -> Duration {
        Duration::hours(self.config.lease_hours)
    }

    pub fn config(&self) -> &WorkbenchConfig {
        &self.config
    }

    pub fn guidelines(&self, strategy: Strategy) -> GuidelineText {
        self.config.book.guidelines(strategy)
    }

    pub fn add_annotator(&self, profile: AnnotatorProfile) -> Result<(), WorkbenchError> {
        let mut st = self.lock();
        match st.annotators.get(&profile.id) {
            Some(existing) if existing.role != profile.role => Err(WorkbenchError::RoleConflict(profile.id)),
            Some(_) => Ok(()),
            None => {
                st.annotators.insert(profile.id.clone(), profile);
                Ok(())
            }
        }
    }

    pub fn annotators(&self) -> Vec<AnnotatorProfile> {
        self.lock().annotators.values().cloned().collect()
    }

    /// Snapshot of the current corpus.
    pub fn corpus(&self) -> Corpus {
        self.lock().corpus.clone()
    }

    fn expire_leases(&self, st: &mut State) {
        let now = self.clock.now();
        let lease = self.lease();
        st.leases.retain(|_, a| a.leased_at + lease > now);
    }

    fn payload(&self, corpus: &Corpus, record: &CSRecord, lease: Option<&Assignment>) -> ItemPayload {
        ItemPayload {
            item_id: record.id.clone(),
            claim_id: record.claim_id.clone(),
            claim: corpus.claim(&record.claim_id).map(|c| c.text.clone()).unwrap_or_default(),
            strategy: record.strategy,
            generated_text: record.generated_text.clone(),
            documents: item_documents(corpus, record),
            guidelines: self.guidelines(record.strategy),
            lease_expires_at: lease.map(|a| a.leased_at + self.lease()),
        }
    }

    /// Lease the next eligible item to `annotator_id`.
    ///
    /// Own-strategy items compete with MIX items: the category with more
    /// eligible items left goes first (ties favour the own strategy), and a
    /// configured MIX quota caps how many MIX items the role takes.
    pub fn next_item(&self, annotator_id: &str) -> Result<ItemPayload, WorkbenchError> {
        let mut st = self.lock();
        let profile = st
            .annotators
            .get(annotator_id)
            .cloned()
            .ok_or_else(|| WorkbenchError::UnknownAnnotator(annotator_id.to_string()))?;
        self.expire_leases(&mut st);

        let open: Vec<&CSRecord> = st
            .corpus
            .records()
            .iter()
            .filter(|r| !r.is_edited() && !st.leases.contains_key(&r.id))
            .collect();
        if open.is_empty() {
            return Err(WorkbenchError::NothingLeft);
        }
        let own = match profile.role {
            AnnotatorRole::FC => Strategy::FC,
            AnnotatorRole::NGO => Strategy::NGO,
        };
        let mut own_items: Vec<&CSRecord> = open.iter().copied().filter(|r| r.strategy == own).collect();
        let mut mix_items: Vec<&CSRecord> = open.iter().copied().filter(|r| r.strategy == Strategy::MIX).collect();
        if let Some(&quota) = self.config.mix_quota.get(&profile.role) {
            let taken = st
                .corpus
                .records()
                .iter()
                .filter(|r| r.strategy == Strategy::MIX && r.annotator_role == Some(profile.role))
                .count()
                + st
                    .leases
                    .values()
                    .filter(|a| {
                        st.annotators.get(&a.annotator_id).is_some_and(|p| p.role == profile.role)
                            && st.corpus.record(&a.item_id).is_some_and(|r| r.strategy == Strategy::MIX)
                    })
                    .count();
            if taken >= quota {
                mix_items.clear();
            }
        }
        own_items.sort_by(|a, b| a.id.cmp(&b.id));
        mix_items.sort_by(|a, b| a.id.cmp(&b.id));
        let pick = if own_items.len() >= mix_items.len() { own_items.first() } else { mix_items.first() };
        let Some(record) = pick.map(|r| (*r).clone()) else {
            return Err(WorkbenchError::NoEligible { annotator: annotator_id.to_string(), role: profile.role });
        };
        let assignment = Assignment {
            annotator_id: annotator_id.to_string(),
            item_id: record.id.clone(),
            state: AssignmentState::InProgress,
            leased_at: self.clock.now(),
        };
        st.leases.insert(record.id.clone(), assignment.clone());
        Ok(self.payload(&st.corpus, &record, Some(&assignment)))
    }

    pub fn get_item(&self, item_id: &str) -> Result<ItemView, WorkbenchError> {
        let mut st = self.lock();
        self.expire_leases(&mut st);
        let record = st
            .corpus
            .record(item_id)
            .cloned()
            .ok_or_else(|| WorkbenchError::UnknownItem(item_id.to_string()))?;
        let lease = st.leases.get(item_id);
        let (state, annotator) = if record.is_edited() {
            (AssignmentState::Submitted, st.submitted_by.get(item_id).cloned())
        } else if let Some(a) = lease {
            (AssignmentState::InProgress, Some(a.annotator_id.clone()))
        } else {
            (AssignmentState::Pending, None)
        };
        Ok(ItemView { payload: self.payload(&st.corpus, &record, lease), state, annotator_id: annotator, record })
    }

    /// Validate and persist an edit, then acknowledge it with its live HTER.
    pub fn submit_edit(&self, item_id: &str, edit: SubmitEdit) -> Result<SubmitAck, WorkbenchError> {
        let mut st = self.lock();
        self.expire_leases(&mut st);
        let record = st
            .corpus
            .record(item_id)
            .cloned()
            .ok_or_else(|| WorkbenchError::UnknownItem(item_id.to_string()))?;
        if record.is_edited() {
            return Err(WorkbenchError::Duplicate(item_id.to_string()));
        }
        let profile = st
            .annotators
            .get(&edit.annotator_id)
            .cloned()
            .ok_or_else(|| WorkbenchError::UnknownAnnotator(edit.annotator_id.clone()))?;
        if st.leases.get(item_id).is_none_or(|a| a.annotator_id != edit.annotator_id) {
            return Err(WorkbenchError::NotHeld { item: item_id.to_string(), annotator: edit.annotator_id });
        }
        if edit.edited_text.trim().is_empty() {
            return Err(WorkbenchError::EmptyEdit);
        }
        let docs = item_documents(&st.corpus, &record);
        for span in &edit.ground_spans {
            let doc = docs
                .iter()
                .find(|d| d.doc_id == span.doc_id && d.doc_kind == span.doc_kind)
                .ok_or_else(|| WorkbenchError::UnknownDocument {
                    item: item_id.to_string(),
                    doc_id: span.doc_id.clone(),
                    kind: span.doc_kind,
                })?;
            let len = doc.text.chars().count();
            if span.start >= span.end || span.end > len {
                return Err(WorkbenchError::SpanOutOfBounds {
                    doc_id: span.doc_id.clone(),
                    start: span.start,
                    end: span.end,
                    len,
                });
            }
        }
        let live_hter = hter_pair(&record.generated_text, &edit.edited_text).map_err(|_| WorkbenchError::EmptyEdit)?;

        let mut parts = st.corpus.parts().clone();
        let slot = parts.records.iter_mut().find(|r| r.id == item_id).expect("record exists");
        slot.edited_text = Some(edit.edited_text);
        slot.annotator_role = Some(profile.role);
        slot.ground_spans = edit.ground_spans;
        slot.comments = edit.comment.filter(|c| !c.trim().is_empty());
        slot.edited_at = Some(self.clock.now());
        let updated = Corpus::from_parts(parts)?;
        if let Some(path) = &self.config.corpus_path {
            save_corpus(&updated, path)?;
        }
        st.corpus = updated;
        st.leases.remove(item_id);
        st.submitted_by.insert(item_id.to_string(), edit.annotator_id);
        Ok(SubmitAck { accepted: true, item_id: item_id.to_string(), live_hter })
    }

    pub fn progress(&self, filter: &ProgressFilter) -> ProgressReport {
        let mut st = self.lock();
        self.expire_leases(&mut st);
        let mut cells: BTreeMap<(Strategy, Option<AnnotatorRole>), (ProgressCell, Vec<f64>)> = BTreeMap::new();
        for r in st.corpus.records() {
            let (role, state) = if let Some(role) = r.annotator_role {
                (Some(role), AssignmentState::Submitted)
            } else if let Some(a) = st.leases.get(&r.id) {
                (st.annotators.get(&a.annotator_id).map(|p| p.role), AssignmentState::InProgress)
            } else {
                (None, AssignmentState::Pending)
            };
            if filter.strategy.is_some_and(|s| s != r.strategy) || filter.role.is_some_and(|x| Some(x) != role) {
                continue;
            }
            let (cell, hters) = cells.entry((r.strategy, role)).or_insert_with(|| {
                (
                    ProgressCell { strategy: r.strategy, role, pending: 0, assigned: 0, submitted: 0, mean_live_hter: None },
                    Vec::new(),
                )
            });
            match state {
                AssignmentState::Pending => cell.pending += 1,
                AssignmentState::InProgress => cell.assigned += 1,
                AssignmentState::Submitted => {
                    cell.submitted += 1;
                    if let Some(h) = r.edited_text.as_deref().and_then(|e| hter_pair(&r.generated_text, e).ok()) {
                        hters.push(h);
                    }
                }
            }
        }
        let cells: Vec<ProgressCell> = cells
            .into_values()
            .map(|(mut c, h)| {
                c.mean_live_hter = (!h.is_empty()).then(|| h.iter().sum::<f64>() / h.len() as f64);
                c
            })
            .collect();
        let total = cells.iter().map(|c| c.pending + c.assigned + c.submitted).sum();
        ProgressReport { cells, total }
    }

    /// Save the current corpus; saving twice yields identical files.
    pub fn export_annotations(&self, path: &Path) -> Result<(), WorkbenchError> {
        let st = self.lock();
        save_corpus(&st.corpus, path)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressFilter {
    pub strategy: Option<Strategy>,
    pub role: Option<AnnotatorRole>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressCell {
    pub strategy: Strategy,
    /// Role of the holder or submitter; absent for pending items.
    pub role: Option<AnnotatorRole>,
    pub pending: usize,
    pub assigned: usize,
    pub submitted: usize,
    pub mean_live_hter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressReport {
    pub cells: Vec<ProgressCell>,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierRules {
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for OutlierRules {
    fn default() -> Self {
        OutlierRules { min_words: 5, max_words: 4500 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundExclusion {
    pub record_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundShare {
    pub strategy: Strategy,
    pub role: AnnotatorRole,
    pub n_records: usize,
    pub fc_chars: usize,
    pub ngo_chars: usize,
    /// Percentages of ground-text characters.
    pub fc_share: f64,
    pub ngo_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTextReport {
    pub groups: Vec<GroundShare>,
    pub excluded: Vec<GroundExclusion>,
}

/// Merge overlapping or touching spans per document, so characters marked
/// twice count once.
fn merged(spans: &[GroundSpan]) -> Vec<GroundSpan> {
    let mut by_doc: BTreeMap<(DocKind, &str), Vec<(usize, usize)>> = BTreeMap::new();
    for s in spans {
        by_doc.entry((s.doc_kind, s.doc_id.as_str())).or_default().push((s.start, s.end));
    }
    let mut out = Vec::new();
    for ((kind, id), mut ranges) in by_doc {
        ranges.sort();
        let mut cur: Option<(usize, usize)> = None;
        for (s, e) in ranges {
            cur = match cur {
                Some((cs, ce)) if s <= ce => Some((cs, ce.max(e))),
                Some(done) => {
                    out.push(GroundSpan { doc_id: id.to_string(), doc_kind: kind, start: done.0, end: done.1 });
                    Some((s, e))
                }
                None => Some((s, e)),
            };
        }
        if let Some((s, e)) = cur {
            out.push(GroundSpan { doc_id: id.to_string(), doc_kind: kind, start: s, end: e });
        }
    }
    out
}

/// Character-weighted share of ground text by document kind for each
/// (strategy, role), excluding outliers: fewer than `min_words` or more than
/// `max_words` words of ground text, or spans into a document kind the
/// strategy does not use. Records without spans are ignored.
pub fn ground_text_analysis(corpus: &Corpus, rules: OutlierRules) -> GroundTextReport {
    let mut groups: BTreeMap<(Strategy, AnnotatorRole), (usize, usize, usize)> = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut texts: HashMap<(DocKind, String), String> = HashMap::new();
    for r in corpus.records() {
        let Some(role) = r.annotator_role else { continue };
        if r.ground_spans.is_empty() {
            continue;
        }
        let exclude = |reason: String| GroundExclusion { record_id: r.id.clone(), reason };
        if let Some(bad) = r
            .ground_spans
            .iter()
            .find(|s| (s.doc_kind == DocKind::Fc && !r.strategy.needs_fc()) || (s.doc_kind == DocKind::Ngo && !r.strategy.needs_ngo()))
        {
            excluded.push(exclude(format!("{:?} document {} used with strategy {}", bad.doc_kind, bad.doc_id, r.strategy.as_str())));
            continue;
        }
        let spans = merged(&r.ground_spans);
        let (mut fc, mut ngo, mut words) = (0usize, 0usize, 0usize);
        for s in &spans {
            let text = texts
                .entry((s.doc_kind, s.doc_id.clone()))
                .or_insert_with(|| corpus.document_text(s.doc_kind, &s.doc_id).unwrap_or_default());
            let slice = s.slice(text).unwrap_or_default();
            words += slice.split_whitespace().count();
            match s.doc_kind {
                DocKind::Fc => fc += s.len(),
                DocKind::Ngo => ngo += s.len(),
            }
        }
        if words < rules.min_words {
            excluded.push(exclude(format!("ground text has {words} words (< {})", rules.min_words)));
            continue;
        }
        if words > rules.max_words {
            excluded.push(exclude(format!("ground text has {words} words (> {})", rules.max_words)));
            continue;
        }
        let g = groups.entry((r.strategy, role)).or_default();
        g.0 += 1;
        g.1 += fc;
        g.2 += ngo;
    }
    let groups = groups
        .into_iter()
        .map(|((strategy, role), (n, fc, ngo))| {
            let total = (fc + ngo).max(1) as f64;
            GroundShare {
                strategy,
                role,
                n_records: n,
                fc_chars: fc,
                ngo_chars: ngo,
                fc_share: 100.0 * fc as f64 / total,
                ngo_share: 100.0 * ngo as f64 / total,
            }
        })
        .collect();
    GroundTextReport { groups, excluded }
}

/// Ids of items an annotator of `role` may ever receive.
pub fn eligible_strategies(role: AnnotatorRole) -> BTreeSet<Strategy> {
    Strategy::ALL.iter().copied().filter(|s| s.accepts_role(role)).collect()
}
