//! `counterkit` command-line pipeline: argument model, command dispatch and
//! the mapping from failures to exit codes (2 config, 3 data, 4 provider).

pub mod config;
pub mod live;
pub mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use counterkit::conllu::parse_conllu;
use counterkit::corpus::{load_corpus_with, save_corpus, CorpusError, FieldMapping, SelectionFlags};
use counterkit::editmetrics::{edit_effort_report, lexdiff, EditError};
use counterkit::genstrat::{
    run_generation_campaign, AuditLog, ChatCompletion, ChatProvider, ChatRequest, GenError, PromptBook, RecordingProvider,
    ReplayProvider, StubChatProvider,
};
use counterkit::ingest::{
    default_keyword_sets, default_ngo_allowlist, fetch_all, filter_signatories, load_ngo_reports, query_factcheck_index,
    read_list_file, Backoff, FactCheckApi, FixtureTransport, HttpResponse, IngestError, KeywordSet, RecordingTransport,
    Transport,
};
use counterkit::matcher::{build_bundles, match_claims, EmbeddingProvider, MatchError, MatchResult, MythRef, StubProvider};
use counterkit::selection::{select_eval_pairs, DEFAULT_DOUBLE_PER_STRATEGY};
use counterkit::textmetrics::{parse_index, quality_report, ParseIndex, RrConfig, TextError};
use counterkit::workbench::{
    ground_text_analysis, AnnotatorProfile, OutlierRules, SystemClock, Workbench, WorkbenchConfig, WorkbenchError,
};
use counterkit::{AnnotatorRole, Claim, Corpus, Strategy, SurveyResponse};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::config::{require_exists, PipelineConfig};
use crate::live::{HttpChatProvider, HttpEmbeddingProvider, HttpTransport};
use crate::report::{build_report, preference_tables, rating_tables, render_report, strategy_index, syntactic_rows};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("provider failure: {0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Provider(_) => 4,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Precondition(_) => CliError::Config(e.to_string()),
            IngestError::Malformed { .. } | IngestError::Io(_) => CliError::Data(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<MatchError> for CliError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::InvalidThreshold(_) => CliError::Config(e.to_string()),
            MatchError::Table(_) | MatchError::EmptyText | MatchError::ZeroVector => CliError::Data(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::Config(_) => CliError::Config(e.to_string()),
            GenError::Provider(_) | GenError::EmptyCompletion | GenError::FixtureMissing(_) => {
                CliError::Provider(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EditError> for CliError {
    fn from(e: EditError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<WorkbenchError> for CliError {
    fn from(e: WorkbenchError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "counterkit", version, about = "Knowledge-grounded counterspeech pipeline")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Corpus file (JSON lines); overrides `paths.corpus`.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Field-name mapping for corpora in a foreign schema.
    #[arg(long, global = true)]
    pub mapping: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Retrieve fact-checking articles and store the signatories' ones.
    IngestFc(IngestFcArgs),
    /// Load NGO myth/anti-stereotype reports from allowlisted domains.
    IngestNgo(IngestNgoArgs),
    /// Match claims to NGO myths and rebuild knowledge bundles.
    Match(MatchArgs),
    /// Generate counterspeech for every claim and strategy.
    Generate(GenerateArgs),
    /// Post-editing service.
    Workbench {
        #[command(subcommand)]
        command: WorkbenchCommand,
    },
    /// Post-editing effort per strategy and annotator role.
    AnalyzeEdits(AnalyzeEditsArgs),
    /// Repetition rate, readability and syntactic depth.
    AnalyzeText(AnalyzeTextArgs),
    /// Most added and removed n-grams.
    Lexdiff(LexdiffArgs),
    /// Share of ground text taken from each knowledge source.
    GroundText(GroundTextArgs),
    /// Survey statistics.
    Stats(StatsArgs),
    /// Pick edited pairs for the preference survey.
    SelectEvalPairs(SelectArgs),
    /// Every table derivable from the corpus.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct IngestFcArgs {
    /// JSON list of `{target_group, keywords}`; defaults to the published sets.
    #[arg(long)]
    pub keywords_file: Option<PathBuf>,
    /// One publisher domain per line.
    #[arg(long)]
    pub signatories_file: Option<PathBuf>,
    /// Recorded request/response pairs (`*.jsonl`); live runs record here.
    #[arg(long)]
    pub fixtures_dir: Option<PathBuf>,
    /// Query the live index instead of replaying fixtures.
    #[arg(long)]
    pub live: bool,
    /// Results per keyword (at most 1000).
    #[arg(long)]
    pub limit: Option<usize>,
    /// Set an article's selection flags and exit: `ID=flag[,flag]`, with
    /// flags among group_focused, counters_false_claim,
    /// contextualizes_true_claim (empty clears).
    #[arg(long = "set-flags", value_name = "ID=FLAGS")]
    pub set_flags: Vec<String>,
}

#[derive(Debug, Args)]
pub struct IngestNgoArgs {
    /// Report files or directories of `*.json` reports.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// One allowed domain per line; defaults to the published list.
    #[arg(long)]
    pub allowlist_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Claims to add or replace (JSON lines of `{id, text, target_group, source_article_id}`).
    #[arg(long)]
    pub claims: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Reject a match after review: `CLAIM=REPORT#PAIR`.
    #[arg(long, value_name = "CLAIM=REPORT#PAIR")]
    pub reject: Vec<String>,
    /// Undo an earlier rejection: `CLAIM=REPORT#PAIR`.
    #[arg(long, value_name = "CLAIM=REPORT#PAIR")]
    pub accept: Vec<String>,
    /// Match results file; defaults to `<corpus stem>.matches.jsonl`.
    #[arg(long)]
    pub matches: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// fc, ngo, mix or all.
    #[arg(long)]
    pub strategy: String,
    /// Continue a campaign that already produced records.
    #[arg(long)]
    pub resume: bool,
    /// Replay recorded completions from this file or directory.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Append every completion as a replay fixture.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Audit log; defaults to `<corpus stem>.audit.jsonl`.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum WorkbenchCommand {
    /// Serve the post-editing API (and the UI bundle, if given).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    /// JSON list of `{id, role, display_name}`.
    #[arg(long)]
    pub annotators: Option<PathBuf>,
    /// Required bearer token for the API.
    #[arg(long)]
    pub token: Option<String>,
    /// Directory with the built web UI.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub lease_hours: Option<i64>,
    /// Cap on MIX items per role: `FC=N` or `NGO=N`.
    #[arg(long, value_name = "ROLE=N")]
    pub mix_quota: Vec<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeEditsArgs {
    /// Grouping key; only `strategy,role` is supported.
    #[arg(long, default_value = "strategy,role")]
    pub group_by: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct AnalyzeTextArgs {
    /// CoNLL-U file or directory with documents `<record id>/gen|ed`.
    #[arg(long)]
    pub parses: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct LexdiffArgs {
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long)]
    pub no_stopwords: bool,
    /// Keep only the top entries of each list.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GroundTextArgs {
    #[arg(long, default_value_t = OutlierRules::default().min_words)]
    pub min_words: usize,
    #[arg(long, default_value_t = OutlierRules::default().max_words)]
    pub max_words: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// 1: generated-vs-edited preferences; 2: strategy ratings.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub survey: u8,
    /// Survey responses (JSON lines); defaults to those in the corpus.
    #[arg(long)]
    pub responses: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub min_hter: Option<f64>,
    /// Pairs per strategy assessed by a second respondent.
    #[arg(long, default_value_t = DEFAULT_DOUBLE_PER_STRATEGY)]
    pub double: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub parses: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: Output,
}

struct Ctx {
    config: PipelineConfig,
    corpus_path: Option<PathBuf>,
    mapping: Option<FieldMapping>,
}

impl Ctx {
    fn corpus_path(&self) -> Result<&Path, CliError> {
        self.corpus_path
            .as_deref()
            .ok_or_else(|| CliError::Config("no corpus given (use --corpus or paths.corpus)".into()))
    }

    fn load(&self) -> Result<Corpus, CliError> {
        let path = self.corpus_path()?;
        require_exists("corpus", path)?;
        Ok(load_corpus_with(path, self.mapping.as_ref())?)
    }

    /// The corpus, or an empty one when the file does not exist yet.
    fn load_or_empty(&self) -> Result<Corpus, CliError> {
        if self.corpus_path()?.exists() {
            self.load()
        } else {
            Ok(Corpus::empty())
        }
    }

    fn save(&self, corpus: &Corpus) -> Result<(), CliError> {
        Ok(save_corpus(corpus, self.corpus_path()?)?)
    }

    /// `<corpus stem>.<suffix>` next to the corpus.
    fn beside_corpus(&self, suffix: &str) -> Result<PathBuf, CliError> {
        let path = self.corpus_path()?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "corpus".into());
        Ok(path.with_file_name(format!("{stem}.{suffix}")))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let mapping = match &cli.mapping {
        Some(p) => {
            require_exists("--mapping", p)?;
            Some(FieldMapping::from_file(p)?)
        }
        None => None,
    };
    let corpus_path = cli.corpus.clone().or_else(|| config.paths.corpus.clone());
    let ctx = Ctx { config, corpus_path, mapping };
    match cli.command {
        Command::IngestFc(a) => ingest_fc(&ctx, a),
        Command::IngestNgo(a) => ingest_ngo(&ctx, a),
        Command::Match(a) => match_cmd(&ctx, a),
        Command::Generate(a) => generate(&ctx, a),
        Command::Workbench { command: WorkbenchCommand::Serve(a) } => serve(&ctx, a),
        Command::AnalyzeEdits(a) => analyze_edits(&ctx, a),
        Command::AnalyzeText(a) => analyze_text(&ctx, a),
        Command::Lexdiff(a) => lexdiff_cmd(&ctx, a),
        Command::GroundText(a) => ground_text(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::SelectEvalPairs(a) => select(&ctx, a),
        Command::Report(a) => report_cmd(&ctx, a),
    }
}

fn emit_text(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    emit_text(&text, out)
}

fn emit<T: Serialize>(value: &T, output: &Output, render: impl FnOnce(&T) -> String) -> Result<(), CliError> {
    match output.format {
        Format::Json => emit_json(value, output.out.as_deref()),
        Format::Text => emit_text(&render(value), output.out.as_deref()),
    }
}

fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    require_exists("input", path)?;
    let file = std::fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn read_json<T: DeserializeOwned>(what: &str, path: &Path) -> Result<T, CliError> {
    require_exists(what, path)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Lets boxed trait objects be wrapped by the generic recorders.
struct DynTransport(Box<dyn Transport>);

impl Transport for DynTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, IngestError> {
        self.0.get(url)
    }
}

struct DynChat(Box<dyn ChatProvider>);

impl ChatProvider for DynChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion, GenError> {
        self.0.complete(request)
    }
}

fn parse_flags(spec: &str) -> Result<(String, SelectionFlags), CliError> {
    let bad = || CliError::Config(format!("--set-flags {spec:?}: expected ID=flag[,flag]"));
    let (id, flags) = spec.split_once('=').ok_or_else(bad)?;
    if id.is_empty() {
        return Err(bad());
    }
    let mut out = SelectionFlags::default();
    for f in flags.split(',').map(str::trim).filter(|f| !f.is_empty()) {
        match f {
            "group_focused" => out.group_focused = true,
            "counters_false_claim" => out.counters_false_claim = true,
            "contextualizes_true_claim" => out.contextualizes_true_claim = true,
            _ => return Err(CliError::Config(format!("unknown selection flag {f:?}"))),
        }
    }
    Ok((id.to_string(), out))
}

fn ingest_fc(ctx: &Ctx, a: IngestFcArgs) -> Result<(), CliError> {
    if !a.set_flags.is_empty() {
        let updates = a.set_flags.iter().map(|s| parse_flags(s)).collect::<Result<Vec<_>, _>>()?;
        let mut parts = ctx.load()?.into_parts();
        for (id, flags) in &updates {
            let art = parts
                .articles
                .iter_mut()
                .find(|x| &x.id == id)
                .ok_or_else(|| CliError::Data(format!("no article {id:?} in the corpus")))?;
            art.selection = *flags;
        }
        let corpus = Corpus::from_parts(parts)?;
        ctx.save(&corpus)?;
        let selected = corpus.articles().iter().filter(|x| x.is_retained()).count();
        return emit_json(&serde_json::json!({"updated": updates.len(), "selected": selected}), None);
    }

    let cfg = &ctx.config;
    let limit = a.limit.unwrap_or(cfg.factcheck.limit);
    let keyword_sets: Vec<KeywordSet> = match a.keywords_file.as_ref().or(cfg.paths.keywords.as_ref()) {
        Some(p) => read_json("--keywords-file", p)?,
        None => default_keyword_sets(),
    };
    for set in &keyword_sets {
        set.validate()?;
    }
    let sig_path = a
        .signatories_file
        .as_ref()
        .or(cfg.paths.signatories.as_ref())
        .ok_or_else(|| CliError::Config("a signatory list is required (--signatories-file)".into()))?;
    require_exists("--signatories-file", sig_path)?;
    let signatories = read_list_file(sig_path)?;
    let fixtures = a.fixtures_dir.as_ref().or(cfg.paths.fixtures.as_ref());
    ctx.corpus_path()?;

    let transport: Box<dyn Transport> = if a.live {
        let key = std::env::var(&cfg.factcheck.api_key_env).ok();
        let http = HttpTransport::new(60, key, cfg.factcheck.base_url.clone());
        match fixtures {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
                Box::new(RecordingTransport::new(DynTransport(Box::new(http)), &dir.join("recorded.jsonl"))?)
            }
            None => Box::new(http),
        }
    } else {
        let dir = fixtures.ok_or_else(|| CliError::Config("replay needs --fixtures-dir (or pass --live)".into()))?;
        require_exists("--fixtures-dir", dir)?;
        Box::new(FixtureTransport::from_path(dir)?)
    };
    let backoff = if a.live {
        Backoff { max_retries: cfg.factcheck.max_retries, base_delay_ms: cfg.factcheck.base_delay_ms }
    } else {
        Backoff::NONE
    };
    let api = FactCheckApi { base_url: cfg.factcheck.base_url.clone(), language_code: cfg.factcheck.language_code.clone() };

    let mut seen = BTreeSet::new();
    let mut pages = Vec::new();
    for set in &keyword_sets {
        for k in &set.keywords {
            if seen.insert(k.clone()) {
                pages.push(query_factcheck_index(transport.as_ref(), &api, k, limit, backoff)?);
            }
        }
    }
    let fetched = fetch_all(transport.as_ref(), &pages, cfg.factcheck.threads, backoff)?;
    let kept = filter_signatories(&fetched.articles, &signatories);
    for f in &fetched.failures {
        eprintln!("warning: {}: {}", f.url, f.message);
    }

    let mut parts = ctx.load_or_empty()?.into_parts();
    let mut added = 0;
    for mut art in kept.iter().cloned() {
        match parts.articles.iter_mut().find(|x| x.id == art.id) {
            // Selection flags are reviewer input and survive re-ingestion.
            Some(old) => {
                art.selection = old.selection;
                *old = art;
            }
            None => {
                parts.articles.push(art);
                added += 1;
            }
        }
    }
    let corpus = Corpus::from_parts(parts)?;
    ctx.save(&corpus)?;
    emit_json(
        &serde_json::json!({
            "queries": pages.len(),
            "retrieved": pages.iter().map(|p| p.results.len()).sum::<usize>(),
            "fetched": fetched.articles.len(),
            "fetch_failures": fetched.failures.len(),
            "signatory": kept.len(),
            "added": added,
            "articles": corpus.articles().len(),
            "selected": corpus.articles().iter().filter(|x| x.is_retained()).count(),
        }),
        None,
    )
}

fn ingest_ngo(ctx: &Ctx, a: IngestNgoArgs) -> Result<(), CliError> {
    let allowlist = match a.allowlist_file.as_ref().or(ctx.config.paths.ngo_allowlist.as_ref()) {
        Some(p) => {
            require_exists("--allowlist-file", p)?;
            read_list_file(p)?
        }
        None => default_ngo_allowlist(),
    };
    for p in &a.paths {
        require_exists("report path", p)?;
    }
    ctx.corpus_path()?;
    let outcome = load_ngo_reports(&a.paths, &allowlist)?;
    let mut parts = ctx.load_or_empty()?.into_parts();
    for report in &outcome.reports {
        match parts.reports.iter_mut().find(|r| r.id == report.id) {
            Some(old) => *old = report.clone(),
            None => parts.reports.push(report.clone()),
        }
    }
    let corpus = Corpus::from_parts(parts)?;
    ctx.save(&corpus)?;
    for r in &outcome.rejected {
        eprintln!("rejected {}: {}", r.path, r.reason);
    }
    emit_json(
        &serde_json::json!({
            "accepted": outcome.reports.len(),
            "pairs": outcome.pair_count(),
            "rejected": outcome.rejected,
            "reports": corpus.reports().len(),
            "total_pairs": corpus.reports().iter().map(|r| r.pairs.len()).sum::<usize>(),
        }),
        None,
    )
}

fn parse_match_ref(spec: &str) -> Result<(String, MythRef), CliError> {
    let bad = || CliError::Config(format!("{spec:?}: expected CLAIM=REPORT#PAIR"));
    let (claim, rest) = spec.split_once('=').ok_or_else(bad)?;
    let (report, idx) = rest.rsplit_once('#').ok_or_else(bad)?;
    let pair_index = idx.parse().map_err(|_| bad())?;
    Ok((claim.to_string(), MythRef { report_id: report.to_string(), pair_index }))
}

fn embedding_provider(cfg: &PipelineConfig) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    let e = &cfg.embeddings;
    if e.provider_url == "stub:" {
        let stub = match &e.stub_table {
            Some(p) => StubProvider::from_table_file(p)?,
            None => StubProvider::new(e.stub_dim, e.stub_seed),
        };
        Ok(Box::new(stub))
    } else if e.provider_url.starts_with("http://") || e.provider_url.starts_with("https://") {
        Ok(Box::new(HttpEmbeddingProvider::new(&e.provider_url, &e.model_id, e.timeout_secs)))
    } else {
        Err(CliError::Config(format!("embeddings.provider_url {:?} is neither stub: nor http(s)", e.provider_url)))
    }
}

fn match_cmd(ctx: &Ctx, a: MatchArgs) -> Result<(), CliError> {
    let threshold = a.threshold.unwrap_or(ctx.config.thresholds.similarity);
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(CliError::Config(format!("threshold {threshold} outside [-1, 1]")));
    }
    let rejects = a.reject.iter().map(|s| parse_match_ref(s)).collect::<Result<Vec<_>, _>>()?;
    let accepts = a.accept.iter().map(|s| parse_match_ref(s)).collect::<Result<Vec<_>, _>>()?;
    let matches_path = match a.matches {
        Some(p) => p,
        None => ctx.beside_corpus("matches.jsonl")?,
    };
    let provider = embedding_provider(&ctx.config)?;
    let mut parts = ctx.load()?.into_parts();
    if let Some(p) = &a.claims {
        for claim in read_json_lines::<Claim>(p)? {
            match parts.claims.iter_mut().find(|c| c.id == claim.id) {
                Some(old) => *old = claim,
                None => parts.claims.push(claim),
            }
        }
    }
    let corpus = Corpus::from_parts(parts)?;

    let mut results = match_claims(corpus.claims(), corpus.reports(), provider.as_ref(), threshold, ctx.config.embeddings.batch_size)?;
    // Review decisions carry over from the previous run.
    let mut rejected: BTreeSet<(String, MythRef)> = BTreeSet::new();
    if matches_path.exists() {
        for m in read_json_lines::<MatchResult>(&matches_path)? {
            if !m.accepted {
                rejected.insert((m.claim_id, m.myth_ref));
            }
        }
    }
    for key in &accepts {
        rejected.remove(key);
    }
    for key in &rejects {
        if !results.iter().any(|m| m.claim_id == key.0 && m.myth_ref == key.1) {
            return Err(CliError::Data(format!(
                "no match {}={}#{} to reject",
                key.0, key.1.report_id, key.1.pair_index
            )));
        }
        rejected.insert(key.clone());
    }
    for m in &mut results {
        m.accepted = !rejected.contains(&(m.claim_id.clone(), m.myth_ref.clone()));
    }
    let lines: String = results.iter().map(|m| serde_json::to_string(m).expect("match serializes") + "\n").collect();
    std::fs::write(&matches_path, lines).map_err(|e| CliError::Data(format!("{}: {e}", matches_path.display())))?;

    let set = build_bundles(&results, corpus.claims(), corpus.reports());
    let mut parts = corpus.into_parts();
    parts.bundles = set.bundles;
    let corpus = Corpus::from_parts(parts)?;
    ctx.save(&corpus)?;
    emit_json(
        &serde_json::json!({
            "claims": corpus.claims().len(),
            "matches": results.len(),
            "rejected": results.iter().filter(|m| !m.accepted).count(),
            "bundles": corpus.bundles().len(),
            "unmatched": set.unmatched,
        }),
        None,
    )
}

pub fn parse_strategies(s: &str) -> Result<Vec<Strategy>, CliError> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Strategy::ALL.to_vec());
    }
    s.split(',')
        .map(|x| x.trim().parse::<Strategy>().map_err(CliError::Config))
        .collect()
}

fn generate(ctx: &Ctx, a: GenerateArgs) -> Result<(), CliError> {
    let strategies = parse_strategies(&a.strategy)?;
    let llm = &ctx.config.llm;
    let base: Box<dyn ChatProvider> = if let Some(f) = &a.fixtures {
        require_exists("--fixtures", f)?;
        Box::new(ReplayProvider::from_path(f)?)
    } else if llm.base_url == "stub:" {
        Box::new(StubChatProvider::default())
    } else {
        let key = std::env::var(&llm.api_key_env)
            .map_err(|_| CliError::Config(format!("environment variable {} is not set", llm.api_key_env)))?;
        Box::new(HttpChatProvider::new(&llm.base_url, Some(key), llm.timeout_secs))
    };
    let provider: Box<dyn ChatProvider> = match &a.record {
        Some(p) => Box::new(RecordingProvider::new(DynChat(base), p)?),
        None => base,
    };
    let corpus = ctx.load()?;
    if !a.resume {
        let existing = corpus.records().iter().filter(|r| strategies.contains(&r.strategy)).count();
        if existing > 0 {
            return Err(CliError::Config(format!(
                "{existing} record(s) already exist for the requested strategies; pass --resume to continue the campaign"
            )));
        }
    }
    let audit_path = match a.audit {
        Some(p) => p,
        None => ctx.beside_corpus("audit.jsonl")?,
    };
    let audit = AuditLog::open(&audit_path)?;
    let outcome = run_generation_campaign(
        &corpus,
        &strategies,
        &llm.generation(),
        &PromptBook::default(),
        provider.as_ref(),
        llm.concurrency,
        Some(&audit),
    )?;
    let generated = outcome.records.len();
    let mut parts = corpus.into_parts();
    parts.records.extend(outcome.records);
    let corpus = Corpus::from_parts(parts)?;
    ctx.save(&corpus)?;
    emit_json(
        &serde_json::json!({"generated": generated, "skipped": outcome.skipped, "errors": outcome.errors}),
        None,
    )?;
    match outcome.errors.first() {
        Some(e) => Err(CliError::Provider(format!(
            "{} item(s) failed, first {}:{}: {}",
            outcome.errors.len(),
            e.claim_id,
            e.strategy,
            e.message
        ))),
        None => Ok(()),
    }
}

fn serve(ctx: &Ctx, a: ServeArgs) -> Result<(), CliError> {
    let wb_cfg = &ctx.config.workbench;
    let annotators_path = a
        .annotators
        .as_ref()
        .or(wb_cfg.annotators.as_ref())
        .ok_or_else(|| CliError::Config("--annotators is required".into()))?;
    let annotators: Vec<AnnotatorProfile> = read_json("--annotators", annotators_path)?;
    let static_dir = a.static_dir.or_else(|| wb_cfg.static_dir.clone());
    if let Some(d) = &static_dir {
        require_exists("--static", d)?;
    }
    let token = match a.token {
        Some(t) => Some(t),
        None => match &wb_cfg.token_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| CliError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        },
    };
    let lease_hours = a.lease_hours.unwrap_or(wb_cfg.lease_hours);
    if lease_hours <= 0 {
        return Err(CliError::Config("--lease-hours must be > 0".into()));
    }
    let mut mix_quota = BTreeMap::new();
    for q in &a.mix_quota {
        let (role, n) = q.split_once('=').ok_or_else(|| CliError::Config(format!("--mix-quota {q:?}: expected ROLE=N")))?;
        let role: AnnotatorRole = role.parse().map_err(CliError::Config)?;
        let n: usize = n.parse().map_err(|_| CliError::Config(format!("--mix-quota {q:?}: bad count")))?;
        mix_quota.insert(role, n);
    }
    let corpus = ctx.load()?;
    let config = WorkbenchConfig {
        corpus_path: Some(ctx.corpus_path()?.to_path_buf()),
        lease_hours,
        mix_quota,
        ..Default::default()
    };
    let workbench = Arc::new(Workbench::new(corpus, annotators, config, Arc::new(SystemClock)));
    let addr = std::net::SocketAddr::new(a.bind, a.port.unwrap_or(wb_cfg.port));
    let state = counterkit_workbench::AppState { workbench, token };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Config(e.to_string()))?;
    eprintln!("workbench listening on http://{addr}");
    rt.block_on(counterkit_workbench::serve(addr, state, static_dir))
        .map_err(|e| CliError::Config(format!("cannot serve on {addr}: {e}")))
}

fn analyze_edits(ctx: &Ctx, a: AnalyzeEditsArgs) -> Result<(), CliError> {
    let keys: BTreeSet<&str> = a.group_by.split(',').map(str::trim).collect();
    if keys != BTreeSet::from(["strategy", "role"]) {
        return Err(CliError::Config(format!("--group-by {:?}: only strategy,role is supported", a.group_by)));
    }
    let corpus = ctx.load()?;
    let rows = edit_effort_report(corpus.records())?;
    let mark = ctx.config.thresholds.hter_mod;
    emit(&rows, &a.output, |r| {
        let mut s = String::new();
        report::render_edit_effort(&mut s, r, mark);
        s
    })
}

fn load_parses(path: &Path) -> Result<ParseIndex, CliError> {
    require_exists("--parses", path)?;
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "conllu"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut docs = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?;
        docs.extend(parse_conllu(&text).map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?);
    }
    Ok(parse_index(docs)?)
}

fn analyze_text(ctx: &Ctx, a: AnalyzeTextArgs) -> Result<(), CliError> {
    let parses = match a.parses.as_ref().or(ctx.config.paths.parses.as_ref()) {
        Some(p) => Some(load_parses(p)?),
        None => None,
    };
    let seed = a.seed.unwrap_or(ctx.config.seeds.repetition_rate);
    let corpus = ctx.load()?;
    let rows = quality_report(corpus.records(), parses.as_ref(), seed, &RrConfig::default())?;
    emit(&rows, &a.output, |r| {
        let mut s = String::new();
        report::render_text_quality(&mut s, r);
        report::render_syntactic(&mut s, &syntactic_rows(r));
        s
    })
}

fn lexdiff_cmd(ctx: &Ctx, a: LexdiffArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(CliError::Config("--n must be at least 1".into()));
    }
    let corpus = ctx.load()?;
    let mut rep = lexdiff(corpus.records(), a.n, a.no_stopwords);
    if let Some(k) = a.top {
        rep.added.truncate(k);
        rep.removed.truncate(k);
    }
    emit_json(&rep, a.out.as_deref())
}

fn ground_text(ctx: &Ctx, a: GroundTextArgs) -> Result<(), CliError> {
    if a.min_words > a.max_words {
        return Err(CliError::Config("--min-words exceeds --max-words".into()));
    }
    let corpus = ctx.load()?;
    let rep = ground_text_analysis(&corpus, OutlierRules { min_words: a.min_words, max_words: a.max_words });
    emit_json(&rep, a.out.as_deref())
}

fn stats(ctx: &Ctx, a: StatsArgs) -> Result<(), CliError> {
    let corpus = match (&a.responses, a.survey) {
        (Some(_), 1) => None,
        _ => Some(ctx.load()?),
    };
    let responses: Vec<SurveyResponse> = match &a.responses {
        Some(p) => read_json_lines(p)?,
        None => corpus.as_ref().map(|c| c.responses().to_vec()).unwrap_or_default(),
    };
    if a.survey == 1 {
        let t = preference_tables(&responses);
        emit(&t, &a.output, |t| {
            let mut s = String::new();
            report::render_preference(&mut s, t);
            s
        })
    } else {
        let index: HashMap<String, Strategy> = corpus.as_ref().map(strategy_index).unwrap_or_default();
        let t = rating_tables(&responses, &index);
        emit(&t, &a.output, |t| {
            let mut s = String::new();
            report::render_rating(&mut s, t);
            s
        })
    }
}

fn select(ctx: &Ctx, a: SelectArgs) -> Result<(), CliError> {
    let min_hter = a.min_hter.unwrap_or(ctx.config.thresholds.hter_select);
    if !(min_hter.is_finite() && min_hter >= 0.0) {
        return Err(CliError::Config(format!("--min-hter {min_hter} must be a non-negative number")));
    }
    let seed = a.seed.unwrap_or(ctx.config.seeds.selection);
    let corpus = ctx.load()?;
    let sel = select_eval_pairs(corpus.records(), min_hter, a.double, seed);
    let mut value = serde_json::to_value(&sel).expect("selection serializes");
    value["total_assessments"] = sel.total_assessments().into();
    emit_json(&value, a.out.as_deref())
}

fn report_cmd(ctx: &Ctx, a: ReportArgs) -> Result<(), CliError> {
    let parses = match a.parses.as_ref().or(ctx.config.paths.parses.as_ref()) {
        Some(p) => Some(load_parses(p)?),
        None => None,
    };
    let seed = a.seed.unwrap_or(ctx.config.seeds.repetition_rate);
    let corpus = ctx.load()?;
    let rep = build_report(&corpus, parses.as_ref(), seed)?;
    let mark = ctx.config.thresholds.hter_mod;
    emit(&rep, &a.output, |r| render_report(r, mark))
}
