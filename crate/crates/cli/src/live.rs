//! Live HTTP implementations of the provider and transport traits.

use std::time::Duration;

use counterkit::genstrat::{parse_chat_response, ChatCompletion, ChatProvider, ChatRequest, GenError};
use counterkit::ingest::{HttpResponse, IngestError, Transport};
use counterkit::matcher::{EmbedRequest, EmbedResponse, EmbeddingProvider, MatchError};
use ureq::Agent;

fn agent(timeout_secs: u64) -> Agent {
    Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(timeout_secs.max(1))))
        .build()
        .into()
}

/// Plain GET transport. When `key` is set, URLs under `key_prefix` get an
/// extra `key=` query parameter at send time, so recorded fixtures never
/// contain the secret.
pub struct HttpTransport {
    agent: Agent,
    key: Option<String>,
    key_prefix: String,
}

impl HttpTransport {
    pub fn new(timeout_secs: u64, key: Option<String>, key_prefix: impl Into<String>) -> Self {
        HttpTransport { agent: agent(timeout_secs), key, key_prefix: key_prefix.into() }
    }

    fn with_key(&self, url: &str) -> String {
        match &self.key {
            Some(k) if url.starts_with(&self.key_prefix) => {
                let sep = if url.contains('?') { '&' } else { '?' };
                format!("{url}{sep}key={k}")
            }
            _ => url.to_string(),
        }
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, IngestError> {
        let net = |e: ureq::Error| IngestError::Network { url: url.to_string(), message: e.to_string() };
        let mut resp = self.agent.get(&self.with_key(url)).call().map_err(net)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(net)?;
        Ok(HttpResponse { status, body })
    }
}

/// Chat-completion client for OpenAI-compatible endpoints.
pub struct HttpChatProvider {
    agent: Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpChatProvider {
    pub fn new(base_url: &str, api_key: Option<String>, timeout_secs: u64) -> Self {
        HttpChatProvider {
            agent: agent(timeout_secs),
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        }
    }
}

impl ChatProvider for HttpChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion, GenError> {
        let body = serde_json::to_string(request).expect("request serializes");
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let fail = |e: ureq::Error| GenError::Provider(format!("{}: {e}", self.url));
        let mut resp = req.send(&body).map_err(fail)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(fail)?;
        let raw: serde_json::Value = serde_json::from_str(&text)
            .map_err(|_| GenError::Provider(format!("HTTP {status} from {}: {text}", self.url)))?;
        if !(200..300).contains(&status) && raw.get("error").is_none() {
            return Err(GenError::Provider(format!("HTTP {status} from {}: {text}", self.url)));
        }
        parse_chat_response(raw)
    }
}

/// Client for the `POST /embed` sidecar contract.
pub struct HttpEmbeddingProvider {
    agent: Agent,
    url: String,
    model_id: String,
}

impl HttpEmbeddingProvider {
    pub fn new(base_url: &str, model_id: &str, timeout_secs: u64) -> Self {
        HttpEmbeddingProvider {
            agent: agent(timeout_secs),
            url: format!("{}/embed", base_url.trim_end_matches('/')),
            model_id: model_id.to_string(),
        }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, MatchError> {
        let body = serde_json::to_string(&EmbedRequest { texts: texts.to_vec() }).expect("request serializes");
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(&body)
            .map_err(|e| MatchError::Unreachable(format!("{}: {e}", self.url)))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| MatchError::Unreachable(format!("{}: {e}", self.url)))?;
        if !(200..300).contains(&status) {
            return Err(MatchError::Provider(format!("HTTP {status}: {text}")));
        }
        let parsed: EmbedResponse =
            serde_json::from_str(&text).map_err(|e| MatchError::Provider(format!("bad /embed response: {e}")))?;
        parsed.into_vectors(texts.len())
    }
}
