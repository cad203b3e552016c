//! Knowledge-grounded counterspeech against hateful misinformation.
//!
//! The crate covers the whole pipeline: fact-checking article ingestion,
//! claim to NGO myth matching, strategy-specific prompt assembly and
//! generation, post-editing effort (TER/HTER), corpus text quality metrics,
//! survey statistics and the post-editing workbench store.

pub mod conllu;
pub mod corpus;
pub mod editmetrics;
pub mod genstrat;
pub mod ingest;
pub mod matcher;
pub mod selection;
pub mod stats;
pub mod textmetrics;
pub mod tokenize;
pub mod workbench;

pub use corpus::{
    AnnotatorRole, CSRecord, Claim, Corpus, FactCheckArticle, GroundSpan, KnowledgeBundle,
    NGOReport, Strategy, SurveyResponse, TargetGroup,
};
