//! Fact-checking article retrieval and NGO report loading.
//!
//! All network access goes through [`Transport`], so runs can be recorded
//! once and replayed from fixtures. Live transports add credentials
//! themselves; the URLs seen here never carry an API key.

use std::collections::{BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{LazyLock, Mutex};
use std::time::Duration;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

use crate::corpus::{FactCheckArticle, NGOReport, NgoPair, SelectionFlags, TargetGroup};

pub const MAX_QUERY_LIMIT: usize = 1000;
pub const MAX_FETCH_THREADS: usize = 4;
pub const DEFAULT_FACTCHECK_URL: &str = "https://factchecktools.googleapis.com/v1alpha1/claims:search";
const API_PAGE_SIZE: usize = 100;

pub const DEFAULT_NGO_DOMAINS: [&str; 31] = [
    "aasas.ca",
    "communitiesinc.org.uk",
    "cpdonline.co.uk",
    "developmenteducation.ie",
    "edmo.eu",
    "efcl.org",
    "healthjournalism.org",
    "iine.org",
    "jrseurope.org",
    "medium.com",
    "rapecrisis.org.uk",
    "safeandequal.org.au",
    "simpl4all.eu",
    "worldrelief.org",
    "adl.org",
    "bpas.org",
    "coolmindshk.com",
    "enar-eu.org",
    "etf.europa.eu",
    "infomigrants.net",
    "learningforjustice.org",
    "nata.org",
    "osce.org",
    "pgaction.org",
    "psychologytoday.com",
    "rescue.org",
    "strongfamilyalliance.org",
    "thearcbc.org",
    "unh.edu",
    "vera.org",
    "weforum.org",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("network failure for {url}: {message}")]
    Network { url: String, message: String },
    #[error("provider returned HTTP {status} for {url}: {body}")]
    Provider { url: String, status: u16, body: String },
    #[error("unparseable response from {url}: {message}")]
    Parse { url: String, message: String },
    #[error("no article text could be extracted from {0}")]
    EmptyBody(String),
    #[error("no fixture recorded for {0}")]
    FixtureMissing(String),
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl IngestError {
    pub fn is_retryable(&self) -> bool {
        match self {
            IngestError::Network { .. } => true,
            IngestError::Provider { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSet {
    pub target_group: TargetGroup,
    pub keywords: Vec<String>,
}

impl KeywordSet {
    pub fn new(target_group: TargetGroup, keywords: Vec<String>) -> Result<Self, IngestError> {
        let set = KeywordSet { target_group, keywords };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::Precondition(format!("{}: {m}", self.target_group.as_str())));
        if self.keywords.is_empty() {
            return bad("empty keyword set".into());
        }
        let mut seen = BTreeSet::new();
        for k in &self.keywords {
            if k.trim().is_empty() || *k != k.to_lowercase() {
                return bad(format!("keyword {k:?} must be non-empty lowercase"));
            }
            if !seen.insert(k) {
                return bad(format!("duplicate keyword {k:?}"));
            }
        }
        Ok(())
    }
}

const KEYWORDS: [(TargetGroup, &[&str]); 6] = [
    (
        TargetGroup::Muslims,
        &["muslim", "islam", "terrorist", "jihadi", "jihad", "ragheadterror", "arab", "koran", "quran", "sharia", "towel head", "rag head"],
    ),
    (
        TargetGroup::Lgbtqia,
        &[
            "gay", "homosexual", "homosexuality", "lgbt", "lgbt+", "lgbti", "lgbtq+", "lgbtq", "faggot", "gender", "lesbian",
            "trans", "transgender", "transsexual", "queer", "sexual", "sex", "heterosexual", "dyke", "gay pride",
        ],
    ),
    (
        TargetGroup::Migrants,
        &[
            "migrant", "immigrant", "refugee", "immigration", "foreigner", "migration", "foreign", "rapefugees", "invasion",
            "invade", "refugeesnotwelcome",
        ],
    ),
    (
        TargetGroup::Women,
        &[
            "woman", "feminism", "feminist", "gender", "female", "harassment", "feminazi", "shithole", "cunt", "blameonenotall",
            "notallmen", "victimcard", "sexual assault", "victim card",
        ],
    ),
    (
        TargetGroup::Disabilities,
        &["disabled", "disability", "autistic", "blind", "deaf", "retard", "downies", "downy", "paralympics", "wheelchair"],
    ),
    (TargetGroup::Jews, &["jew", "jewish", "holocaust", "judaism", "nazi", "nazism", "genocide"]),
];

/// The published keyword list, one set per target group.
pub fn default_keyword_sets() -> Vec<KeywordSet> {
    KEYWORDS
        .iter()
        .map(|(g, ks)| KeywordSet { target_group: *g, keywords: ks.iter().map(|k| k.to_string()).collect() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<HttpResponse, IngestError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportFixture {
    pub url: String,
    pub status: u16,
    pub body: String,
}

/// Replays recorded URL → response pairs.
#[derive(Debug, Clone, Default)]
pub struct FixtureTransport {
    responses: HashMap<String, HttpResponse>,
}

impl FixtureTransport {
    pub fn new(fixtures: impl IntoIterator<Item = TransportFixture>) -> Self {
        FixtureTransport {
            responses: fixtures
                .into_iter()
                .map(|f| (f.url, HttpResponse { status: f.status, body: f.body }))
                .collect(),
        }
    }

    pub fn insert(&mut self, url: impl Into<String>, status: u16, body: impl Into<String>) {
        self.responses.insert(url.into(), HttpResponse { status, body: body.into() });
    }

    /// Load `*.jsonl` fixture files from a directory (or one file).
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let mut fixtures = Vec::new();
        for file in jsonl_files(path)? {
            for (i, line) in BufReader::new(File::open(&file)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                fixtures.push(serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
                    path: format!("{}:{}", file.display(), i + 1),
                    message: e.to_string(),
                })?);
            }
        }
        Ok(FixtureTransport::new(fixtures))
    }
}

fn jsonl_files(path: &Path) -> Result<Vec<PathBuf>, IngestError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut v: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    v.sort();
    Ok(v)
}

impl Transport for FixtureTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, IngestError> {
        self.responses.get(url).cloned().ok_or_else(|| IngestError::FixtureMissing(url.to_string()))
    }
}

/// Forwards to an inner transport and appends every response as a fixture.
pub struct RecordingTransport<T> {
    inner: T,
    out: Mutex<File>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, path: &Path) -> Result<Self, IngestError> {
        let out = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RecordingTransport { inner, out: Mutex::new(out) })
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn get(&self, url: &str) -> Result<HttpResponse, IngestError> {
        let resp = self.inner.get(url)?;
        let fx = TransportFixture { url: url.to_string(), status: resp.status, body: resp.body.clone() };
        let mut f = self.out.lock().expect("fixture writer poisoned");
        writeln!(f, "{}", serde_json::to_string(&fx).expect("fixture serializes"))?;
        Ok(resp)
    }
}

/// Exponential backoff on retryable failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Backoff {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff { max_retries: 4, base_delay_ms: 500 }
    }
}

impl Backoff {
    pub const NONE: Backoff = Backoff { max_retries: 0, base_delay_ms: 0 };

    /// GET with retries; non-2xx statuses become [`IngestError::Provider`].
    pub fn get(&self, transport: &dyn Transport, url: &str) -> Result<String, IngestError> {
        let mut attempt = 0;
        loop {
            let result = transport.get(url).and_then(|r| {
                if (200..300).contains(&r.status) {
                    Ok(r.body)
                } else {
                    Err(IngestError::Provider { url: url.to_string(), status: r.status, body: r.body })
                }
            });
            match result {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    std::thread::sleep(Duration::from_millis(self.base_delay_ms.saturating_mul(1 << attempt)));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalEntry {
    pub url: String,
    pub publisher: String,
    pub claim_reviewed: String,
    pub review_date: Option<String>,
    #[serde(default)]
    pub textual_rating: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalPage {
    pub query: String,
    pub results: Vec<RetrievalEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactCheckApi {
    pub base_url: String,
    pub language_code: String,
}

impl Default for FactCheckApi {
    fn default() -> Self {
        FactCheckApi { base_url: DEFAULT_FACTCHECK_URL.to_string(), language_code: "en".to_string() }
    }
}

impl FactCheckApi {
    pub fn search_url(&self, query: &str, page_size: usize, page_token: Option<&str>) -> String {
        let mut url = Url::parse(&self.base_url).expect("valid base url");
        {
            let mut q = url.query_pairs_mut();
            q.append_pair("query", query);
            q.append_pair("languageCode", &self.language_code);
            q.append_pair("pageSize", &page_size.to_string());
            if let Some(t) = page_token {
                q.append_pair("pageToken", t);
            }
        }
        url.to_string()
    }
}

#[derive(Deserialize)]
struct SearchResponse {
    #[serde(default)]
    claims: Vec<ApiClaim>,
    #[serde(rename = "nextPageToken")]
    next_page_token: Option<String>,
}

#[derive(Deserialize)]
struct ApiClaim {
    #[serde(default)]
    text: String,
    #[serde(rename = "claimReview", default)]
    claim_review: Vec<ApiReview>,
}

#[derive(Deserialize)]
struct ApiReview {
    url: Option<String>,
    publisher: Option<ApiPublisher>,
    #[serde(rename = "reviewDate")]
    review_date: Option<String>,
    #[serde(rename = "textualRating", default)]
    textual_rating: String,
}

#[derive(Deserialize)]
struct ApiPublisher {
    name: Option<String>,
    site: Option<String>,
}

/// Page through the search API until `limit` reviews are collected or the
/// result set ends. Reviews without an absolute URL are skipped.
pub fn query_factcheck_index(
    transport: &dyn Transport,
    api: &FactCheckApi,
    keyword: &str,
    limit: usize,
    backoff: Backoff,
) -> Result<RetrievalPage, IngestError> {
    if keyword.trim().is_empty() {
        return Err(IngestError::Precondition("keyword must be non-empty".into()));
    }
    if limit > MAX_QUERY_LIMIT {
        return Err(IngestError::Precondition(format!("limit {limit} exceeds {MAX_QUERY_LIMIT}")));
    }
    let mut page = RetrievalPage { query: keyword.to_string(), results: Vec::new() };
    let mut token: Option<String> = None;
    while page.results.len() < limit {
        let size = (limit - page.results.len()).min(API_PAGE_SIZE);
        let url = api.search_url(keyword, size, token.as_deref());
        let body = backoff.get(transport, &url)?;
        let resp: SearchResponse =
            serde_json::from_str(&body).map_err(|e| IngestError::Parse { url: url.clone(), message: e.to_string() })?;
        for claim in resp.claims {
            for review in claim.claim_review {
                let Some(u) = review.url.filter(|u| Url::parse(u).is_ok()) else {
                    continue;
                };
                let publisher = review
                    .publisher
                    .and_then(|p| p.site.or(p.name))
                    .unwrap_or_else(|| normalize_domain(&u));
                page.results.push(RetrievalEntry {
                    url: u,
                    publisher,
                    claim_reviewed: claim.text.clone(),
                    review_date: review.review_date,
                    textual_rating: review.textual_rating,
                });
            }
        }
        match resp.next_page_token {
            Some(t) if !t.is_empty() => token = Some(t),
            _ => break,
        }
    }
    page.results.truncate(limit);
    Ok(page)
}

static DROP_BLOCKS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?is)<(script|style|nav|header|footer|aside|form|noscript)\b[^>]*>.*?</(script|style|nav|header|footer|aside|form|noscript)>")
        .expect("valid regex")
});
static PARAGRAPH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<p\b[^>]*>(.*?)</p>").expect("valid regex"));
static ARTICLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<article\b[^>]*>(.*?)</article>").expect("valid regex"));
static TITLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<(h1|title)\b[^>]*>(.*?)</(h1|title)>").expect("valid regex"));
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").expect("valid regex"));
static ENTITY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"&(#x[0-9a-fA-F]+|#[0-9]+|[a-zA-Z]+);").expect("valid regex"));

fn decode_entities(s: &str) -> String {
    ENTITY
        .replace_all(s, |c: &regex::Captures| {
            let e = &c[1];
            let ch = if let Some(hex) = e.strip_prefix("#x").or_else(|| e.strip_prefix("#X")) {
                u32::from_str_radix(hex, 16).ok().and_then(char::from_u32)
            } else if let Some(dec) = e.strip_prefix('#') {
                dec.parse().ok().and_then(char::from_u32)
            } else {
                match e {
                    "amp" => Some('&'),
                    "lt" => Some('<'),
                    "gt" => Some('>'),
                    "quot" => Some('"'),
                    "apos" => Some('\''),
                    "nbsp" => Some(' '),
                    "rsquo" | "lsquo" => Some('\''),
                    "rdquo" | "ldquo" => Some('"'),
                    "mdash" => Some('—'),
                    "ndash" => Some('–'),
                    _ => None,
                }
            };
            ch.map(String::from).unwrap_or_else(|| c[0].to_string())
        })
        .into_owned()
}

fn clean_fragment(html: &str) -> String {
    let text = decode_entities(&TAG.replace_all(html, " "));
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedPage {
    pub title: Option<String>,
    pub body: String,
}

/// Main-text extraction: paragraphs inside `<article>` when present, else all
/// paragraphs, else the tag-stripped page; navigation and scripts dropped.
pub fn extract_main_text(html: &str) -> ExtractedPage {
    let html = DROP_BLOCKS.replace_all(html, " ");
    let title = TITLE
        .captures(&html)
        .map(|c| clean_fragment(&c[2]))
        .filter(|t| !t.is_empty());
    let scope = ARTICLE.captures(&html).map(|c| c[1].to_string()).unwrap_or_else(|| html.to_string());
    let paragraphs: Vec<String> = PARAGRAPH
        .captures_iter(&scope)
        .map(|c| clean_fragment(&c[1]))
        .filter(|p| !p.is_empty())
        .collect();
    let body = if paragraphs.is_empty() {
        let without_title = TITLE.replace_all(&scope, " ");
        clean_fragment(&without_title)
    } else {
        paragraphs.join("\n\n")
    };
    ExtractedPage { title, body }
}

/// Stable article id derived from its URL.
pub fn article_id(url: &str) -> String {
    format!("fc-{}", &hex::encode(Sha256::digest(url.as_bytes()))[..12])
}

pub fn fetch_article(
    transport: &dyn Transport,
    entry: &RetrievalEntry,
    query: &str,
    backoff: Backoff,
) -> Result<FactCheckArticle, IngestError> {
    let html = backoff.get(transport, &entry.url)?;
    let page = extract_main_text(&html);
    if page.body.trim().is_empty() {
        return Err(IngestError::EmptyBody(entry.url.clone()));
    }
    Ok(FactCheckArticle {
        id: article_id(&entry.url),
        url: entry.url.clone(),
        publisher: entry.publisher.clone(),
        is_signatory: false,
        claim_reviewed: entry.claim_reviewed.clone(),
        verdict_text: entry.textual_rating.clone(),
        body: page.body,
        matched_keywords: vec![query.to_string()],
        selection: SelectionFlags::default(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchFailure {
    pub url: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FetchOutcome {
    pub articles: Vec<FactCheckArticle>,
    pub failures: Vec<FetchFailure>,
}

/// Fetch every distinct URL across the pages with at most `threads`
/// (capped at 4) concurrent requests. Output follows (page, rank) order; an
/// article found by several keywords lists all of them.
pub fn fetch_all(
    transport: &dyn Transport,
    pages: &[RetrievalPage],
    threads: usize,
    backoff: Backoff,
) -> Result<FetchOutcome, IngestError> {
    let mut order: Vec<(&RetrievalEntry, Vec<String>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for page in pages {
        for entry in &page.results {
            match index.get(entry.url.as_str()) {
                Some(&i) => {
                    if !order[i].1.contains(&page.query) {
                        order[i].1.push(page.query.clone());
                    }
                }
                None => {
                    index.insert(&entry.url, order.len());
                    order.push((entry, vec![page.query.clone()]));
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.clamp(1, MAX_FETCH_THREADS))
        .build()
        .map_err(|e| IngestError::Precondition(e.to_string()))?;
    let results: Vec<Result<FactCheckArticle, FetchFailure>> = pool.install(|| {
        order
            .par_iter()
            .map(|(entry, keywords)| {
                fetch_article(transport, entry, &keywords[0], backoff)
                    .map(|mut a| {
                        a.matched_keywords = keywords.clone();
                        a
                    })
                    .map_err(|e| FetchFailure { url: entry.url.clone(), message: e.to_string() })
            })
            .collect()
    });
    let mut out = FetchOutcome::default();
    for r in results {
        match r {
            Ok(a) => out.articles.push(a),
            Err(f) => out.failures.push(f),
        }
    }
    Ok(out)
}

/// Lowercased host without scheme, port, path or leading `www.`.
pub fn normalize_domain(s: &str) -> String {
    let s = s.trim().to_lowercase();
    let host = match Url::parse(&s) {
        Ok(u) if u.host_str().is_some() => u.host_str().unwrap_or_default().to_string(),
        _ => s.split(['/', ':']).next().unwrap_or_default().to_string(),
    };
    host.strip_prefix("www.").unwrap_or(&host).trim_end_matches('.').to_string()
}

/// True when `host` equals an allowlisted domain or is a subdomain of one.
pub fn domain_allowed(host: &str, allowlist: &BTreeSet<String>) -> bool {
    let host = normalize_domain(host);
    allowlist.iter().any(|d| {
        let d = normalize_domain(d);
        host == d || host.ends_with(&format!(".{d}"))
    })
}

/// Keep articles whose publisher (or, failing that, URL host) is a
/// signatory; kept articles are marked `is_signatory`. Order is preserved.
pub fn filter_signatories(articles: &[FactCheckArticle], signatories: &BTreeSet<String>) -> Vec<FactCheckArticle> {
    let normalized: BTreeSet<String> = signatories.iter().map(|s| normalize_domain(s)).collect();
    articles
        .iter()
        .filter(|a| normalized.contains(&normalize_domain(&a.publisher)) || normalized.contains(&normalize_domain(&a.url)))
        .map(|a| FactCheckArticle { is_signatory: true, ..a.clone() })
        .collect()
}

/// Articles passing both the signatory filter and the reviewer's selection flags.
pub fn retain_selected(articles: &[FactCheckArticle]) -> Vec<FactCheckArticle> {
    articles.iter().filter(|a| a.is_retained()).cloned().collect()
}

/// One identifier per line; blank lines and `#` comments ignored.
pub fn read_list_file(path: &Path) -> Result<BTreeSet<String>, IngestError> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[derive(Debug, Deserialize)]
struct ReportFile {
    id: Option<String>,
    source_url: String,
    target_group: TargetGroup,
    pairs: Vec<PairFile>,
}

#[derive(Debug, Deserialize)]
struct PairFile {
    #[serde(default)]
    myth: String,
    #[serde(default)]
    anti_stereotype: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRejection {
    pub path: String,
    pub domain: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NgoLoadOutcome {
    pub reports: Vec<NGOReport>,
    pub rejected: Vec<ReportRejection>,
}

impl NgoLoadOutcome {
    pub fn pair_count(&self) -> usize {
        self.reports.iter().map(|r| r.pairs.len()).sum()
    }
}

/// Parse NGO report files (JSON: `id`, `source_url`, `target_group`, `pairs`).
/// Reports outside the allowlist are rejected, not failed; a pair missing
/// either side is an error. Directories are expanded to their `*.json` files.
pub fn load_ngo_reports(paths: &[PathBuf], allowlist: &BTreeSet<String>) -> Result<NgoLoadOutcome, IngestError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut v: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            v.sort();
            files.extend(v);
        } else {
            files.push(p.clone());
        }
    }
    let mut out = NgoLoadOutcome::default();
    for file in files {
        let name = file.display().to_string();
        let malformed = |message: String| IngestError::Malformed { path: name.clone(), message };
        let raw: ReportFile = serde_json::from_str(&std::fs::read_to_string(&file)?).map_err(|e| malformed(e.to_string()))?;
        let domain = normalize_domain(&raw.source_url);
        if !domain_allowed(&domain, allowlist) {
            out.rejected.push(ReportRejection {
                path: name.clone(),
                domain: domain.clone(),
                reason: format!("domain {domain} is not in the allowlist"),
            });
            continue;
        }
        if raw.pairs.is_empty() {
            return Err(malformed("report has no myth/anti-stereotype pairs".into()));
        }
        let mut pairs = Vec::with_capacity(raw.pairs.len());
        for (i, p) in raw.pairs.into_iter().enumerate() {
            if p.myth.trim().is_empty() || p.anti_stereotype.trim().is_empty() {
                return Err(malformed(format!("pair {i} is missing its myth or anti-stereotype")));
            }
            pairs.push(NgoPair { myth: p.myth, anti_stereotype: p.anti_stereotype });
        }
        let id = raw
            .id
            .unwrap_or_else(|| file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        out.reports.push(NGOReport { id, source_url: raw.source_url, target_group: raw.target_group, pairs });
    }
    Ok(out)
}

pub fn default_ngo_allowlist() -> BTreeSet<String> {
    DEFAULT_NGO_DOMAINS.iter().map(|d| d.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_sets_match_published_list() {
        let sets = default_keyword_sets();
        assert_eq!(sets.len(), 6);
        for s in &sets {
            s.validate().unwrap();
        }
        let muslims = &sets[0];
        assert_eq!(muslims.target_group, TargetGroup::Muslims);
        assert_eq!(muslims.keywords.len(), 12);
        assert!(muslims.keywords.contains(&"towel head".to_string()));
        assert_eq!(sets[1].keywords.len(), 20);
        assert_eq!(sets[2].keywords.len(), 11);
        assert_eq!(sets[3].keywords.len(), 14);
        assert_eq!(sets[4].keywords.len(), 10);
        assert_eq!(sets[5].keywords, ["jew", "jewish", "holocaust", "judaism", "nazi", "nazism", "genocide"]);
        assert!(KeywordSet::new(TargetGroup::Jews, vec!["Jew".into()]).is_err());
        assert!(KeywordSet::new(TargetGroup::Jews, vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn domain_normalization() {
        assert_eq!(normalize_domain("https://www.FullFact.org/health/x"), "fullfact.org");
        assert_eq!(normalize_domain("www.politifact.com"), "politifact.com");
        assert_eq!(normalize_domain("apnews.com:443/a"), "apnews.com");
        let allow = default_ngo_allowlist();
        assert!(domain_allowed("https://www.adl.org/resources", &allow));
        assert!(domain_allowed("blog.medium.com", &allow));
        assert!(!domain_allowed("notadl.org", &allow));
    }

    #[test]
    fn extraction() {
        let html = r#"<html><head><title>T</title><script>var x = "<p>no</p>";</script></head>
            <body><nav><p>Menu</p></nav><article><h1>Claim &amp; check</h1>
            <p>First <b>para</b>.</p><p>Second&nbsp;one &#8217;ok&#x27;.</p></article></body></html>"#;
        let page = extract_main_text(html);
        assert_eq!(page.body, "First para .\n\nSecond one \u{2019}ok'.");
        assert_eq!(page.title.as_deref(), Some("T"));
        assert!(extract_main_text("<html><body><div> </div></body></html>").body.is_empty());
    }

    #[test]
    fn backoff_retries_only_retryable() {
        struct Flaky(Mutex<u32>, u16);
        impl Transport for Flaky {
            fn get(&self, _: &str) -> Result<HttpResponse, IngestError> {
                let mut n = self.0.lock().unwrap();
                *n += 1;
                Ok(if *n < 3 { HttpResponse { status: self.1, body: "busy".into() } } else { HttpResponse { status: 200, body: "ok".into() } })
            }
        }
        let b = Backoff { max_retries: 4, base_delay_ms: 0 };
        let t = Flaky(Mutex::new(0), 429);
        assert_eq!(b.get(&t, "u").unwrap(), "ok");
        assert_eq!(*t.0.lock().unwrap(), 3);
        let t = Flaky(Mutex::new(0), 403);
        assert!(matches!(b.get(&t, "u"), Err(IngestError::Provider { status: 403, .. })));
        assert_eq!(*t.0.lock().unwrap(), 1);
    }

    #[test]
    fn query_preconditions() {
        let t = FixtureTransport::default();
        let api = FactCheckApi::default();
        assert!(matches!(query_factcheck_index(&t, &api, " ", 10, Backoff::NONE), Err(IngestError::Precondition(_))));
        assert!(matches!(query_factcheck_index(&t, &api, "x", 1001, Backoff::NONE), Err(IngestError::Precondition(_))));
        let empty = query_factcheck_index(&t, &api, "x", 0, Backoff::NONE).unwrap();
        assert!(empty.results.is_empty());
    }

    fn article(publisher: &str) -> FactCheckArticle {
        FactCheckArticle {
            id: publisher.into(),
            url: format!("https://{publisher}/a"),
            publisher: publisher.into(),
            is_signatory: false,
            claim_reviewed: "c".into(),
            verdict_text: "False".into(),
            body: "b".into(),
            matched_keywords: vec![],
            selection: SelectionFlags::default(),
        }
    }

    #[test]
    fn signatory_filter() {
        let arts = vec![article("fullfact.org"), article("random.blog"), article("www.apnews.com")];
        assert!(filter_signatories(&arts, &BTreeSet::new()).is_empty());
        let sig: BTreeSet<String> = ["https://fullfact.org".to_string(), "apnews.com".to_string()].into();
        let once = filter_signatories(&arts, &sig);
        assert_eq!(once.iter().map(|a| a.id.as_str()).collect::<Vec<_>>(), ["fullfact.org", "www.apnews.com"]);
        assert!(once.iter().all(|a| a.is_signatory));
        assert_eq!(filter_signatories(&once, &sig), once);
    }
}
