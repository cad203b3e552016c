//! Minimal CoNLL-U reader: ID, FORM, HEAD and DEPREL columns.
//!
//! Documents are delimited with `# newdoc id = <record id>` comments, so one
//! file can carry the parses of many counterspeech items. Multiword token
//! ranges (`3-4`) and empty nodes (`5.1`) are skipped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConlluError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("sentence has {0} roots, expected exactly one")]
    RootCount(usize),
    #[error("token {token} has head {head} outside the sentence")]
    HeadOutOfRange { token: usize, head: usize },
    #[error("head links form a cycle through token {0}")]
    Cycle(usize),
    #[error("empty sentence")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedToken {
    pub form: String,
    /// 1-based index of the head token, 0 for the root.
    pub head: usize,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsedSentence {
    pub tokens: Vec<ParsedToken>,
}

impl ParsedSentence {
    /// Build a sentence from (form, head) pairs.
    pub fn from_heads<'a>(tokens: impl IntoIterator<Item = (&'a str, usize)>) -> Self {
        ParsedSentence {
            tokens: tokens
                .into_iter()
                .map(|(form, head)| ParsedToken {
                    form: form.to_string(),
                    head,
                    deprel: if head == 0 { "root".into() } else { "dep".into() },
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ConlluError> {
        self.token_depths().map(|_| ())
    }

    /// Depth of each token: number of head links up to and including the
    /// root, so the root itself has depth 1.
    pub fn token_depths(&self) -> Result<Vec<usize>, ConlluError> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(ConlluError::Empty);
        }
        let roots = self.tokens.iter().filter(|t| t.head == 0).count();
        if roots != 1 {
            return Err(ConlluError::RootCount(roots));
        }
        for (i, t) in self.tokens.iter().enumerate() {
            if t.head > n {
                return Err(ConlluError::HeadOutOfRange { token: i + 1, head: t.head });
            }
        }
        let mut depth = vec![0usize; n];
        for start in 0..n {
            let mut path = Vec::new();
            let mut cur = start;
            while depth[cur] == 0 {
                if path.contains(&cur) {
                    return Err(ConlluError::Cycle(cur + 1));
                }
                path.push(cur);
                match self.tokens[cur].head {
                    0 => {
                        depth[cur] = 1;
                        path.pop();
                        break;
                    }
                    h => cur = h - 1,
                }
            }
            let mut d = depth[cur];
            for &node in path.iter().rev() {
                d += 1;
                depth[node] = d;
            }
        }
        Ok(depth)
    }

    /// Sentence depth: the deepest token.
    pub fn depth(&self) -> Result<usize, ConlluError> {
        Ok(self.token_depths()?.into_iter().max().unwrap_or(0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConlluDocument {
    pub doc_id: Option<String>,
    pub sentences: Vec<ParsedSentence>,
}

pub fn parse_conllu(text: &str) -> Result<Vec<ConlluDocument>, ConlluError> {
    let mut docs: Vec<ConlluDocument> = Vec::new();
    let mut current = ParsedSentence::default();
    let flush = |docs: &mut Vec<ConlluDocument>, sentence: &mut ParsedSentence| -> Result<(), ConlluError> {
        if sentence.tokens.is_empty() {
            return Ok(());
        }
        let sentence = std::mem::take(sentence);
        sentence.validate()?;
        if docs.is_empty() {
            docs.push(ConlluDocument::default());
        }
        docs.last_mut().expect("non-empty").sentences.push(sentence);
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut docs, &mut current)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(rest) = comment.trim().strip_prefix("newdoc") {
                flush(&mut docs, &mut current)?;
                let id = rest.trim().strip_prefix("id").map(|r| r.trim().trim_start_matches('=').trim().to_string());
                docs.push(ConlluDocument {
                    doc_id: id.filter(|s| !s.is_empty()),
                    sentences: Vec::new(),
                });
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 7 {
            return Err(ConlluError::Syntax {
                line: line_no,
                message: format!("expected at least 7 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let syntax = |message: String| ConlluError::Syntax { line: line_no, message };
        let id: usize = cols[0].parse().map_err(|_| syntax(format!("bad ID {:?}", cols[0])))?;
        if id != current.tokens.len() + 1 {
            return Err(syntax(format!("token ID {id} out of sequence")));
        }
        let head: usize = cols[6].parse().map_err(|_| syntax(format!("bad HEAD {:?}", cols[6])))?;
        current.tokens.push(ParsedToken {
            form: cols[1].to_string(),
            head,
            deprel: cols.get(7).unwrap_or(&"_").to_string(),
        });
    }
    flush(&mut docs, &mut current)?;
    Ok(docs)
}
