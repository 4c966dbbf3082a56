//! Live HTTP backends. The generator, summarizer, and judge speak a
//! chat-completion style API; the search provider returns ranked documents
//! as JSON; the link provider queries a wiki opensearch endpoint.
//!
//! Every call honors a per-call timeout and one retry with jittered
//! backoff.

use std::time::Duration;

use async_trait::async_trait;
use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use super::{
    GatewayError, Generation, GenerationRequest, Generator, LinkProvider, SearchDocument,
    SearchProvider, StopReason,
};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct LlmEndpoint {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
}

fn client(timeout: Duration) -> Result<reqwest::Client, GatewayError> {
    reqwest::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))
}

async fn backoff() {
    let jitter_ms = rand::thread_rng().gen_range(200..1200);
    tokio::time::sleep(Duration::from_millis(jitter_ms)).await;
}

pub struct HttpGenerator {
    pub endpoint: LlmEndpoint,
    pub timeout: Duration,
}

impl HttpGenerator {
    pub fn new(endpoint: LlmEndpoint) -> Self {
        Self {
            endpoint,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[async_trait]
impl Generator for HttpGenerator {
    async fn generate(&self, request: &GenerationRequest) -> Result<Generation, GatewayError> {
        request.validate()?;
        let url = format!(
            "{}/chat/completions",
            self.endpoint.base_url.trim_end_matches('/')
        );
        let body = json!({
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
            "stop": request.stop_sequences,
            "seed": request.seed,
        });
        let client = client(self.timeout)?;
        let mut last_err = String::new();
        for attempt in 0..2 {
            if attempt > 0 {
                backoff().await;
            }
            let resp = client
                .post(&url)
                .bearer_auth(&self.endpoint.api_key)
                .json(&body)
                .send()
                .await;
            match resp {
                Ok(resp) if resp.status().is_success() => {
                    let parsed: ChatResponse = resp
                        .json()
                        .await
                        .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
                    let choice = parsed.choices.into_iter().next().ok_or_else(|| {
                        GatewayError::BackendUnavailable("empty choices".into())
                    })?;
                    let stop_reason = match choice.finish_reason.as_deref() {
                        Some("stop_sequence") | Some("stop") => StopReason::StopSequence,
                        Some("length") => StopReason::MaxTokens,
                        _ => StopReason::EndOfSequence,
                    };
                    return Ok(Generation {
                        text: choice.message.content,
                        stop_reason,
                    });
                }
                Ok(resp) if resp.status().as_u16() == 413 => {
                    return Err(GatewayError::ContextOverflow {
                        estimate: request.prompt.len() / 4,
                        limit: 0,
                    });
                }
                Ok(resp) => last_err = format!("status {}", resp.status()),
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(GatewayError::BackendUnavailable(last_err))
    }
}

/// Search provider over an HTTP endpoint returning
/// `{"results": [{"url", "title", "content"}]}`.
pub struct HttpSearchProvider {
    pub base_url: String,
    pub api_key: String,
    pub timeout: Duration,
}

#[derive(Deserialize)]
struct SearchResponse {
    results: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    url: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    content: String,
}

#[async_trait]
impl SearchProvider for HttpSearchProvider {
    async fn search(
        &self,
        query: &str,
        top_k: usize,
    ) -> Result<Vec<SearchDocument>, GatewayError> {
        let client = client(self.timeout)?;
        let mut last_err = String::new();
        for attempt in 0..2 {
            if attempt > 0 {
                backoff().await;
            }
            let resp = client
                .get(&self.base_url)
                .bearer_auth(&self.api_key)
                .query(&[("q", query), ("k", &top_k.to_string())])
                .send()
                .await;
            match resp {
                Ok(resp) if resp.status().is_success() => {
                    let parsed: SearchResponse = resp
                        .json()
                        .await
                        .map_err(|e| GatewayError::SearchFailed {
                            query: query.to_owned(),
                            message: e.to_string(),
                        })?;
                    return Ok(parsed
                        .results
                        .into_iter()
                        .take(top_k)
                        .enumerate()
                        .map(|(i, hit)| SearchDocument {
                            url: hit.url,
                            title: hit.title,
                            content: hit.content,
                            rank: i + 1,
                        })
                        .collect());
                }
                Ok(resp) => last_err = format!("status {}", resp.status()),
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(GatewayError::SearchFailed {
            query: query.to_owned(),
            message: last_err,
        })
    }
}

/// Link provider against a wiki opensearch endpoint, used for evidence
/// coverage replay.
pub struct WikiLinkProvider {
    pub base_url: String,
    pub timeout: Duration,
}

impl Default for WikiLinkProvider {
    fn default() -> Self {
        Self {
            base_url: "https://en.wikipedia.org/w/api.php".into(),
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[async_trait]
impl LinkProvider for WikiLinkProvider {
    async fn top_links(&self, query: &str, top_k: usize) -> Result<Vec<String>, GatewayError> {
        let client = client(self.timeout)?;
        let resp = client
            .get(&self.base_url)
            .query(&[
                ("action", "opensearch"),
                ("format", "json"),
                ("limit", &top_k.to_string()),
                ("search", query),
            ])
            .send()
            .await
            .map_err(|e| GatewayError::ProviderUnavailable(e.to_string()))?;
        let parsed: serde_json::Value = resp
            .json()
            .await
            .map_err(|e| GatewayError::ProviderUnavailable(e.to_string()))?;
        // Opensearch shape: [query, [titles], [descriptions], [urls]]
        let urls = parsed
            .get(3)
            .and_then(|v| v.as_array())
            .map(|arr| {
                arr.iter()
                    .filter_map(|v| v.as_str().map(str::to_owned))
                    .collect::<Vec<_>>()
            })
            .unwrap_or_default();
        Ok(urls)
    }
}
