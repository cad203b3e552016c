//! Strategy prompts and counterspeech generation through a pluggable chat
//! provider.
//!
//! Templates carry `<NAME>` placeholders that are substituted in a single
//! pass, so knowledge text that happens to contain a placeholder literal is
//! never expanded again.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::Utc;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{CSRecord, Claim, Corpus, FactCheckArticle, KnowledgeBundle, Strategy};

pub const DEFAULT_MODEL_ID: &str = "gpt-4o-mini-2024-07-18";
pub const DEFAULT_MAX_TOKENS: u32 = 100;
pub const DEFAULT_TEMPERATURE: f64 = 0.8;
pub const DEFAULT_CONCURRENCY: usize = 4;

// The NGO template keeps the original "innformation" spelling on purpose.
pub const NGO_TEMPLATE: &str = "You are an NGO operator who provides counterstatements to negative stereotypes contained in hateful messages.
Given the hateful claim provided in HATER_TURN, generate a two-sentence-long CS following the guidelines provided in NGO_GUIDELINES and using the innformation contained in the NGO_ARTICLE.
Answer by referring exclusively to NGO_ARTICLE, don't cite the sources in brackets.

HATER_TURN: <HATER_TURN>
NGO_GUIDELINES: <NGO_GUIDELINES>
NGO_ARTICLE: <NGO_ARTICLE>";

pub const FC_TEMPLATE: &str = "You are a fact-checker who provides counterstatements to misinformation contained in hateful messages.
Given the hateful claim provided in HATER_TURN, generate a two-sentence-long CS following the guidelines provided in FC_GUIDELINES and using the information contained in the FC_ARTICLE.
Answer by referring exclusively to FC_ARTICLE, don't cite the sources in brackets.

HATER_TURN: <HATER_TURN>
FC_GUIDELINES: <FC_GUIDELINES>
FC_ARTICLE: <FC_ARTICLE>";

pub const MIX_TEMPLATE: &str = "You are a counterspeaker who provides counterstatements to hateful messages.
Given the hateful claim provided in HATER_TURN, generate a two-sentence-long CS following the guidelines provided in MIX_GUIDELINES.
You must necessarily use the facts contained in the FC_ARTICLE to contrast misinformation and the content from the NGO_ARTICLE to contrast stereotypes.
Answer by referring exclusively and equally to FC_ARTICLE and NGO_ARTICLE, don't cite the sources in brackets.

HATER_TURN: <HATER_TURN>
MIX_GUIDELINES: <MIX_GUIDELINES>
NGO_ARTICLE: <NGO_ARTICLE>
FC_ARTICLE: <FC_ARTICLE>";

pub const FC_GUIDELINES: [&str; 5] = [
    "Counteract misinformation with accurate and verifiable facts and statistics.",
    "Provide evidence for every factual statement made in the counter speech.",
    "Mention the sources on which the counter speech is based.",
    "Keep the counter speech impartial and avoid political partisanship.",
    "Formulate counter speech using a precise, factual, and non-emotive language.",
];

pub const NGO_GUIDELINES: [&str; 7] = [
    "Avoid abusive language.",
    "Challenge the claim, not the person who wrote it.",
    "Refrain from using divisive labels (e.g., racist, fascist).",
    "Express support to those who might be under attack.",
    "Counter hate with kindness, positivity, mutual respect, and politeness.",
    "Empathize with underlying fears or anxieties that caused the expression of hate.",
    "Challenge negative stereotypes using facts and providing context.",
];

pub const MIX_GUIDELINES: [&str; 7] = [
    "Avoid abusive language and divisive labels (e.g., racist, fascist).",
    "Challenge the claim, not the person who wrote it.",
    "Counter misinformation with accurate facts, evidence, impartiality, and reliable sources.",
    "Provide context for the misinformed hateful claim.",
    "Express support for those under attack and respond with kindness and respect.",
    "Empathize with underlying fears or anxieties that caused the expression of hate.",
    "Challenge negative stereotypes using facts and providing context.",
];

#[derive(Debug, Error)]
pub enum GenError {
    #[error("{0} knowledge required")]
    MissingKnowledge(&'static str),
    #[error("bundle for claim {bundle} does not belong to claim {claim}")]
    BundleMismatch { claim: String, bundle: String },
    #[error("article {got} is not the bundle's article {expected}")]
    ArticleMismatch { expected: String, got: String },
    #[error("template placeholder <{0}> has no value")]
    UnfilledPlaceholder(String),
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("provider failure: {0}")]
    Provider(String),
    #[error("provider returned an empty completion")]
    EmptyCompletion,
    #[error("no replay fixture for request {0}")]
    FixtureMissing(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture {path}:{line}: {message}")]
    Fixture { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidelineText {
    pub strategy: Strategy,
    pub body: String,
}

impl GuidelineText {
    pub fn default_for(strategy: Strategy) -> Self {
        let lines: &[&str] = match strategy {
            Strategy::FC => &FC_GUIDELINES,
            Strategy::NGO => &NGO_GUIDELINES,
            Strategy::MIX => &MIX_GUIDELINES,
        };
        GuidelineText { strategy, body: lines.join("\n") }
    }
}

pub fn default_template(strategy: Strategy) -> &'static str {
    match strategy {
        Strategy::FC => FC_TEMPLATE,
        Strategy::NGO => NGO_TEMPLATE,
        Strategy::MIX => MIX_TEMPLATE,
    }
}

/// Templates and guideline bodies for all strategies; defaults are the
/// published ones, every entry overridable from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBook {
    pub templates: BTreeMap<Strategy, String>,
    pub guidelines: BTreeMap<Strategy, GuidelineText>,
}

impl Default for PromptBook {
    fn default() -> Self {
        PromptBook {
            templates: Strategy::ALL.iter().map(|&s| (s, default_template(s).to_string())).collect(),
            guidelines: Strategy::ALL.iter().map(|&s| (s, GuidelineText::default_for(s))).collect(),
        }
    }
}

impl PromptBook {
    pub fn template(&self, s: Strategy) -> &str {
        self.templates.get(&s).map(String::as_str).unwrap_or_else(|| default_template(s))
    }

    pub fn guidelines(&self, s: Strategy) -> GuidelineText {
        self.guidelines.get(&s).cloned().unwrap_or_else(|| GuidelineText::default_for(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub max_tokens: u32,
    pub temperature: f64,
    pub model_id: String,
    #[serde(default)]
    pub placement: MessagePlacement,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
            model_id: DEFAULT_MODEL_ID.to_string(),
            placement: MessagePlacement::default(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.max_tokens == 0 {
            return Err(GenError::Config("max_tokens must be > 0".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(GenError::Config("temperature must be >= 0".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(GenError::Config("model_id is empty".into()));
        }
        Ok(())
    }
}

/// Where the filled template goes in the chat request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessagePlacement {
    /// The whole template as one user message.
    #[default]
    User,
    /// The whole template as one system message.
    System,
    /// Instructions (before the first blank line) as system, slots as user.
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub strategy: Strategy,
    pub claim_id: String,
    pub claim_text: String,
    pub filled_template: String,
    pub knowledge_refs: Vec<String>,
}

/// Names of all `<NAME>` placeholders in a template, in order of appearance.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('<') {
        let after = &rest[open + 1..];
        match after.find('>') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                out.push(after[..close].to_string());
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_uppercase() || c == '_')
}

/// Single-pass substitution; every placeholder must have a value.
pub fn fill_template(template: &str, values: &HashMap<&str, String>) -> Result<String, GenError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('>') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                let name = &after[..close];
                let value = values.get(name).ok_or_else(|| GenError::UnfilledPlaceholder(name.to_string()))?;
                out.push_str(value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('<');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

pub fn build_prompt(
    strategy: Strategy,
    claim: &Claim,
    bundle: &KnowledgeBundle,
    article: Option<&FactCheckArticle>,
    book: &PromptBook,
) -> Result<PromptInstance, GenError> {
    if bundle.claim_id != claim.id {
        return Err(GenError::BundleMismatch { claim: claim.id.clone(), bundle: bundle.claim_id.clone() });
    }
    let mut values: HashMap<&str, String> = HashMap::new();
    let mut refs = Vec::new();
    values.insert("HATER_TURN", claim.text.clone());
    let guideline_slot = match strategy {
        Strategy::FC => "FC_GUIDELINES",
        Strategy::NGO => "NGO_GUIDELINES",
        Strategy::MIX => "MIX_GUIDELINES",
    };
    values.insert(guideline_slot, book.guidelines(strategy).body);
    if strategy.needs_ngo() {
        if bundle.ngo_pairs.is_empty() {
            return Err(GenError::MissingKnowledge("NGO"));
        }
        values.insert("NGO_ARTICLE", bundle.ngo_text());
        let mut seen = HashSet::new();
        for id in bundle.report_ids() {
            if seen.insert(id) {
                refs.push(id.to_string());
            }
        }
    }
    if strategy.needs_fc() {
        let article = article.ok_or(GenError::MissingKnowledge("FC"))?;
        if article.id != bundle.fc_article_id {
            return Err(GenError::ArticleMismatch { expected: bundle.fc_article_id.clone(), got: article.id.clone() });
        }
        values.insert("FC_ARTICLE", article.document_text());
        refs.insert(0, article.id.clone());
    }
    let filled = fill_template(book.template(strategy), &values)?;
    Ok(PromptInstance {
        strategy,
        claim_id: claim.id.clone(),
        claim_text: claim.text.clone(),
        filled_template: filled,
        knowledge_refs: refs,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Chat-completion request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(prompt: &PromptInstance, config: &GenerationConfig) -> Self {
        let msg = |role: &str, content: &str| ChatMessage { role: role.into(), content: content.into() };
        let text = prompt.filled_template.as_str();
        let messages = match config.placement {
            MessagePlacement::User => vec![msg("user", text)],
            MessagePlacement::System => vec![msg("system", text)],
            MessagePlacement::Split => match text.split_once("\n\n") {
                Some((sys, user)) => vec![msg("system", sys), msg("user", user)],
                None => vec![msg("user", text)],
            },
        };
        ChatRequest {
            model: config.model_id.clone(),
            messages,
            max_tokens: config.max_tokens,
            temperature: config.temperature,
        }
    }

    /// Stable fixture key: SHA-256 of the canonical JSON body.
    pub fn key(&self) -> String {
        let body = serde_json::to_string(self).expect("request serializes");
        hex::encode(Sha256::digest(body.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatCompletion {
    pub text: String,
    /// Provider response body as received.
    pub raw: serde_json::Value,
}

/// Extract the first choice's content from a chat-completion response, or
/// surface an `error` payload.
pub fn parse_chat_response(raw: serde_json::Value) -> Result<ChatCompletion, GenError> {
    if let Some(err) = raw.get("error") {
        let msg = err.get("message").and_then(|m| m.as_str()).map(str::to_string).unwrap_or_else(|| err.to_string());
        return Err(GenError::Provider(msg));
    }
    let text = raw
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .ok_or_else(|| GenError::Provider("response has no choices[0].message.content".into()))?
        .to_string();
    Ok(ChatCompletion { text, raw })
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion, GenError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFixture {
    pub key: String,
    pub request: ChatRequest,
    pub response: serde_json::Value,
}

/// Answers from recorded request/response pairs keyed by [`ChatRequest::key`].
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    fixtures: HashMap<String, serde_json::Value>,
}

impl ReplayProvider {
    pub fn new(fixtures: impl IntoIterator<Item = ReplayFixture>) -> Self {
        ReplayProvider {
            fixtures: fixtures.into_iter().map(|f| (f.key, f.response)).collect(),
        }
    }

    /// Load every `*.jsonl` fixture line in a file or directory.
    pub fn from_path(path: &Path) -> Result<Self, GenError> {
        let files: Vec<PathBuf> = if path.is_dir() {
            let mut v: Vec<PathBuf> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            v.sort();
            v
        } else {
            vec![path.to_path_buf()]
        };
        let mut fixtures = Vec::new();
        for f in files {
            for (i, line) in BufReader::new(File::open(&f)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let fx: ReplayFixture = serde_json::from_str(&line).map_err(|e| GenError::Fixture {
                    path: f.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                fixtures.push(fx);
            }
        }
        Ok(ReplayProvider::new(fixtures))
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl ChatProvider for ReplayProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion, GenError> {
        let key = request.key();
        let raw = self.fixtures.get(&key).cloned().ok_or(GenError::FixtureMissing(key))?;
        parse_chat_response(raw)
    }
}

/// Wraps a provider and appends every successful exchange as a replay fixture.
pub struct RecordingProvider<P> {
    inner: P,
    out: Mutex<File>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn new(inner: P, fixture_path: &Path) -> Result<Self, GenError> {
        let out = OpenOptions::new().create(true).append(true).open(fixture_path)?;
        Ok(RecordingProvider { inner, out: Mutex::new(out) })
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion, GenError> {
        let c = self.inner.complete(request)?;
        let fx = ReplayFixture { key: request.key(), request: request.clone(), response: c.raw.clone() };
        let mut f = self.out.lock().expect("fixture writer poisoned");
        writeln!(f, "{}", serde_json::to_string(&fx).expect("fixture serializes"))?;
        Ok(c)
    }
}

/// Canned offline provider. Without a fixed reply it picks one of a few
/// generic two-sentence replies from the request key.
#[derive(Debug, Clone, Default)]
pub struct StubChatProvider {
    pub reply: Option<String>,
}

const CANNED: [&str; 3] = [
    "This claim is not supported by the available evidence. Generalizing about a whole group ignores the facts and the people affected.",
    "The article shows that this statement is misleading. Everyone deserves to be judged on facts rather than stereotypes.",
    "There is no reliable evidence behind this claim. Sharing accurate information helps protect people who are unfairly targeted.",
];

impl ChatProvider for StubChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion, GenError> {
        let text = match &self.reply {
            Some(r) => r.clone(),
            None => {
                let key = request.key();
                let idx = u8::from_str_radix(&key[..2], 16).expect("hex key") as usize % CANNED.len();
                CANNED[idx].to_string()
            }
        };
        let raw = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]});
        parse_chat_response(raw)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp: String,
    pub claim_id: String,
    pub strategy: Strategy,
    pub prompt: String,
    pub config: GenerationConfig,
    pub request_key: String,
    pub raw_response: Option<serde_json::Value>,
    pub text: Option<String>,
    pub error: Option<String>,
}

/// Append-only JSON-lines audit trail of every generation attempt.
pub struct AuditLog {
    file: Mutex<File>,
}

impl AuditLog {
    pub fn open(path: &Path) -> Result<Self, GenError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog { file: Mutex::new(file) })
    }

    pub fn append(&self, entry: &AuditEntry) -> Result<(), GenError> {
        let line = serde_json::to_string(entry).expect("audit entry serializes");
        let mut f = self.file.lock().expect("audit log poisoned");
        writeln!(f, "{line}")?;
        f.flush()?;
        Ok(())
    }
}

pub fn generate(
    provider: &dyn ChatProvider,
    prompt: &PromptInstance,
    config: &GenerationConfig,
    audit: Option<&AuditLog>,
) -> Result<String, GenError> {
    config.validate()?;
    let request = ChatRequest::new(prompt, config);
    let result = provider.complete(&request).and_then(|c| {
        if c.text.trim().is_empty() {
            Err(GenError::EmptyCompletion)
        } else {
            Ok(c)
        }
    });
    if let Some(log) = audit {
        let (raw, text, error) = match &result {
            Ok(c) => (Some(c.raw.clone()), Some(c.text.clone()), None),
            Err(e) => (None, None, Some(e.to_string())),
        };
        log.append(&AuditEntry {
            timestamp: Utc::now().to_rfc3339(),
            claim_id: prompt.claim_id.clone(),
            strategy: prompt.strategy,
            prompt: prompt.filled_template.clone(),
            config: config.clone(),
            request_key: request.key(),
            raw_response: raw,
            text,
            error,
        })?;
    }
    Ok(result?.text.trim().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemError {
    pub claim_id: String,
    pub strategy: Strategy,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignOutcome {
    /// Newly generated records, ordered by (claim id, strategy).
    pub records: Vec<CSRecord>,
    pub errors: Vec<ItemError>,
    /// (claim, strategy) pairs that already had a record.
    pub skipped: usize,
}

/// Generate one record per (claim, strategy) not yet present in `corpus`,
/// with at most `concurrency` provider calls in flight. Item failures are
/// collected and the campaign continues.
pub fn run_generation_campaign(
    corpus: &Corpus,
    strategies: &[Strategy],
    config: &GenerationConfig,
    book: &PromptBook,
    provider: &dyn ChatProvider,
    concurrency: usize,
    audit: Option<&AuditLog>,
) -> Result<CampaignOutcome, GenError> {
    config.validate()?;
    let mut wanted: Vec<Strategy> = strategies.to_vec();
    wanted.sort();
    wanted.dedup();
    let mut claims: Vec<&Claim> = corpus.claims().iter().collect();
    claims.sort_by(|a, b| a.id.cmp(&b.id));

    let mut skipped = 0;
    let mut work = Vec::new();
    for claim in claims {
        for &s in &wanted {
            if corpus.record(&CSRecord::make_id(&claim.id, s)).is_some() {
                skipped += 1;
            } else {
                work.push((claim, s));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .map_err(|e| GenError::Config(e.to_string()))?;
    let results: Vec<Result<CSRecord, ItemError>> = pool.install(|| {
        work.par_iter()
            .map(|&(claim, strategy)| {
                let item_err = |e: GenError| ItemError {
                    claim_id: claim.id.clone(),
                    strategy,
                    message: e.to_string(),
                };
                let fallback;
                let bundle = match corpus.bundle(&claim.id) {
                    Some(b) => b,
                    None => {
                        fallback = KnowledgeBundle {
                            claim_id: claim.id.clone(),
                            fc_article_id: claim.source_article_id.clone(),
                            ngo_pairs: Vec::new(),
                        };
                        &fallback
                    }
                };
                let article = corpus.article(&bundle.fc_article_id);
                let prompt = build_prompt(strategy, claim, bundle, article, book).map_err(item_err)?;
                let text = generate(provider, &prompt, config, audit).map_err(item_err)?;
                Ok(CSRecord {
                    id: CSRecord::make_id(&claim.id, strategy),
                    claim_id: claim.id.clone(),
                    strategy,
                    generated_text: text,
                    edited_text: None,
                    annotator_role: None,
                    ground_spans: Vec::new(),
                    comments: None,
                    edited_at: None,
                })
            })
            .collect()
    });

    let mut outcome = CampaignOutcome { skipped, ..Default::default() };
    for r in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(e) => outcome.errors.push(e),
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BundlePair, SelectionFlags, TargetGroup};

    fn claim() -> Claim {
        Claim {
            id: "c1".into(),
            text: "They are all criminals.".into(),
            target_group: TargetGroup::Migrants,
            source_article_id: "a1".into(),
        }
    }

    fn article() -> FactCheckArticle {
        FactCheckArticle {
            id: "a1".into(),
            url: "https://fullfact.org/x".into(),
            publisher: "fullfact.org".into(),
            is_signatory: true,
            claim_reviewed: "Migrants commit most crimes".into(),
            verdict_text: "False.".into(),
            body: "Crime statistics show no such pattern.".into(),
            matched_keywords: vec!["migrant".into()],
            selection: SelectionFlags { group_focused: true, counters_false_claim: true, contextualizes_true_claim: false },
        }
    }

    fn bundle(pairs: usize) -> KnowledgeBundle {
        KnowledgeBundle {
            claim_id: "c1".into(),
            fc_article_id: "a1".into(),
            ngo_pairs: (0..pairs)
                .map(|i| BundlePair {
                    report_id: format!("r{i}"),
                    pair_index: 0,
                    myth: format!("myth {i}"),
                    anti_stereotype: format!("fact {i}"),
                    similarity: 0.5,
                })
                .collect(),
        }
    }

    #[test]
    fn fc_prompt_is_filled() {
        let p = build_prompt(Strategy::FC, &claim(), &bundle(0), Some(&article()), &PromptBook::default()).unwrap();
        assert!(p.filled_template.contains("They are all criminals."));
        assert!(p.filled_template.contains("Crime statistics show no such pattern."));
        assert!(p.filled_template.contains(FC_GUIDELINES[0]));
        assert!(placeholders(&p.filled_template).is_empty());
        assert_eq!(p.knowledge_refs, ["a1"]);
    }

    #[test]
    fn mix_requires_ngo() {
        let err = build_prompt(Strategy::MIX, &claim(), &bundle(0), Some(&article()), &PromptBook::default()).unwrap_err();
        assert_eq!(err.to_string(), "NGO knowledge required");
        let err = build_prompt(Strategy::FC, &claim(), &bundle(1), None, &PromptBook::default()).unwrap_err();
        assert_eq!(err.to_string(), "FC knowledge required");
    }

    #[test]
    fn ngo_pairs_in_bundle_order() {
        let p = build_prompt(Strategy::NGO, &claim(), &bundle(2), None, &PromptBook::default()).unwrap();
        let first = p.filled_template.find("Myth: myth 0").unwrap();
        let second = p.filled_template.find("Myth: myth 1").unwrap();
        assert!(first < second);
        assert_eq!(p.knowledge_refs, ["r0", "r1"]);
    }

    #[test]
    fn substitution_is_single_pass() {
        let mut c = claim();
        c.text = "see <FC_ARTICLE> and <b>".into();
        let p = build_prompt(Strategy::NGO, &c, &bundle(1), None, &PromptBook::default()).unwrap();
        assert!(p.filled_template.contains("HATER_TURN: see <FC_ARTICLE> and <b>"));
    }

    #[test]
    fn template_placeholders() {
        assert_eq!(placeholders(MIX_TEMPLATE), ["HATER_TURN", "MIX_GUIDELINES", "NGO_ARTICLE", "FC_ARTICLE"]);
        assert_eq!(placeholders(NGO_TEMPLATE), ["HATER_TURN", "NGO_GUIDELINES", "NGO_ARTICLE"]);
        assert!(NGO_TEMPLATE.contains("innformation"));
    }

    #[test]
    fn replay_and_empty_completion() {
        let p = build_prompt(Strategy::FC, &claim(), &bundle(0), Some(&article()), &PromptBook::default()).unwrap();
        let cfg = GenerationConfig::default();
        let req = ChatRequest::new(&p, &cfg);
        let fx = ReplayFixture {
            key: req.key(),
            request: req.clone(),
            response: serde_json::json!({"choices":[{"message":{"role":"assistant","content":"Recorded reply."}}]}),
        };
        let replay = ReplayProvider::new([fx]);
        assert_eq!(generate(&replay, &p, &cfg, None).unwrap(), "Recorded reply.");
        let mut other = cfg.clone();
        other.temperature = 0.0;
        assert!(matches!(generate(&replay, &p, &other, None), Err(GenError::FixtureMissing(_))));
        let empty = StubChatProvider { reply: Some("  ".into()) };
        assert!(matches!(generate(&empty, &p, &cfg, None), Err(GenError::EmptyCompletion)));
    }

    #[test]
    fn request_shape() {
        let p = build_prompt(Strategy::FC, &claim(), &bundle(0), Some(&article()), &PromptBook::default()).unwrap();
        let cfg = GenerationConfig::default();
        let req = ChatRequest::new(&p, &cfg);
        assert_eq!(req.model, "gpt-4o-mini-2024-07-18");
        assert_eq!((req.max_tokens, req.temperature), (100, 0.8));
        assert_eq!(req.messages.len(), 1);
        assert_eq!(req.messages[0].role, "user");
        let split = ChatRequest::new(&p, &GenerationConfig { placement: MessagePlacement::Split, ..cfg });
        assert_eq!(split.messages[0].role, "system");
        assert!(split.messages[1].content.starts_with("HATER_TURN: "));
    }

    #[test]
    fn provider_error_payload() {
        let err = parse_chat_response(serde_json::json!({"error": {"message": "quota"}})).unwrap_err();
        assert_eq!(err.to_string(), "provider failure: quota");
    }

    #[test]
    fn config_validation() {
        let bad = GenerationConfig { max_tokens: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = GenerationConfig { temperature: -0.1, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
