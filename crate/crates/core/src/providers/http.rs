//! HTTP JSON backends.
//!
//! Chat and embedding speak the OpenAI-compatible `/chat/completions` and
//! `/embeddings` shapes. Search is a generic ranked-document API:
//! `GET <endpoint>?q=<query>&limit=<n>` answering
//! `{"results": [{"url", "title", "body" | "snippet"}]}`.
//!
//! Configuration comes from the environment:
//!
//! | variable | meaning |
//! |---|---|
//! | `PRISM_CHAT_URL`, `PRISM_CHAT_MODEL`, `PRISM_CHAT_KEY` | chat endpoint base, model, key |
//! | `PRISM_EMBED_URL`, `PRISM_EMBED_MODEL`, `PRISM_EMBED_KEY` | embedding endpoint base, model, key |
//! | `PRISM_SEARCH_URL`, `PRISM_SEARCH_KEY` | search endpoint, key |
//!
//! `OPENAI_API_KEY` is used when a chat or embedding key is unset.

use std::time::Duration;

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{
    ChatBackend, ChatOutput, ChatRequest, EmbedBackend, ProviderError, ProviderHandle, RetryPolicy,
    SearchBackend, SearchResult, Secret, Usage,
};

pub const DEFAULT_CHAT_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_EMBED_MODEL: &str = "text-embedding-3-small";
pub const DEFAULT_OPENAI_BASE: &str = "https://api.openai.com/v1";

fn client(timeout: Duration) -> Result<Client, ProviderError> {
    Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| ProviderError::Unavailable(e.to_string()))
}

fn send_err(e: reqwest::Error) -> ProviderError {
    if e.is_timeout() {
        ProviderError::Timeout
    } else {
        ProviderError::Unavailable(e.to_string())
    }
}

fn check_status(resp: Response) -> Result<Response, ProviderError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let body = resp.text().unwrap_or_default();
    Err(match status {
        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => ProviderError::Auth(body),
        StatusCode::TOO_MANY_REQUESTS => ProviderError::RateLimited { attempts: 1 },
        s if s.is_server_error() => ProviderError::Unavailable(format!("{s}: {body}")),
        s => ProviderError::MalformedResponse(format!("{s}: {body}")),
    })
}

fn parse_json<T: for<'de> Deserialize<'de>>(resp: Response) -> Result<T, ProviderError> {
    let text = resp.text().map_err(send_err)?;
    serde_json::from_str(&text).map_err(|e| ProviderError::MalformedResponse(e.to_string()))
}

pub struct HttpChat {
    client: Client,
    url: String,
    model: String,
    key: Secret,
}

impl HttpChat {
    pub fn new(
        base: &str,
        model: impl Into<String>,
        key: Secret,
        timeout: Duration,
    ) -> Result<Self, ProviderError> {
        Ok(Self {
            client: client(timeout)?,
            url: format!("{}/chat/completions", base.trim_end_matches('/')),
            model: model.into(),
            key,
        })
    }
}

#[derive(Deserialize)]
struct ChatPayload {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl ChatBackend for HttpChat {
    fn complete(&self, req: &ChatRequest) -> Result<ChatOutput, ProviderError> {
        let mut messages = Vec::new();
        if !req.system_prompt.is_empty() {
            messages.push(json!({"role": "system", "content": req.system_prompt}));
        }
        messages.push(json!({"role": "user", "content": req.user_prompt}));
        let mut body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        if let Some(stop) = &req.stop {
            body["stop"] = json!(stop);
        }
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(self.key.expose())
            .json(&body)
            .send()
            .map_err(send_err)?;
        let payload: ChatPayload = parse_json(check_status(resp)?)?;
        let text = payload
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| ProviderError::MalformedResponse("no completion text".into()))?;
        let usage = payload
            .usage
            .map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_else(|| Usage::estimate(req, &text));
        Ok(ChatOutput { text, usage })
    }
}

pub struct HttpEmbed {
    client: Client,
    url: String,
    model: String,
    key: Secret,
}

impl HttpEmbed {
    pub fn new(
        base: &str,
        model: impl Into<String>,
        key: Secret,
        timeout: Duration,
    ) -> Result<Self, ProviderError> {
        Ok(Self {
            client: client(timeout)?,
            url: format!("{}/embeddings", base.trim_end_matches('/')),
            model: model.into(),
            key,
        })
    }
}

#[derive(Deserialize)]
struct EmbedPayload {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    #[serde(default)]
    index: usize,
    embedding: Vec<f64>,
}

impl EmbedBackend for HttpEmbed {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(self.key.expose())
            .json(&json!({"model": self.model, "input": texts}))
            .send()
            .map_err(send_err)?;
        let mut payload: EmbedPayload = parse_json(check_status(resp)?)?;
        payload.data.sort_by_key(|d| d.index);
        Ok(payload.data.into_iter().map(|d| d.embedding).collect())
    }
}

pub struct HttpSearch {
    client: Client,
    url: String,
    key: Secret,
}

impl HttpSearch {
    pub fn new(url: &str, key: Secret, timeout: Duration) -> Result<Self, ProviderError> {
        Ok(Self {
            client: client(timeout)?,
            url: url.to_owned(),
            key,
        })
    }
}

#[derive(Deserialize)]
struct SearchPayload {
    #[serde(default)]
    results: Vec<SearchItem>,
}

#[derive(Deserialize)]
struct SearchItem {
    url: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    body: Option<String>,
    #[serde(default)]
    snippet: Option<String>,
}

impl SearchBackend for HttpSearch {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, ProviderError> {
        let mut req = self
            .client
            .get(&self.url)
            .query(&[("q", query), ("limit", &limit.to_string())]);
        if !self.key.expose().is_empty() {
            req = req.bearer_auth(self.key.expose());
        }
        let payload: SearchPayload = parse_json(check_status(req.send().map_err(send_err)?)?)?;
        Ok(payload
            .results
            .into_iter()
            .enumerate()
            .map(|(i, r)| SearchResult {
                url: r.url,
                title: r.title,
                snippet_or_body: r.body.or(r.snippet).unwrap_or_default(),
                rank: i + 1,
            })
            .collect())
    }
}

fn env(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn key_from(name: &str) -> Secret {
    Secret::new(env(name).or_else(|| env("OPENAI_API_KEY")).unwrap_or_default())
}

/// Chat, embedding and search handles configured from environment variables.
pub fn handles_from_env(
    retry: &RetryPolicy,
) -> Result<(ProviderHandle, ProviderHandle, ProviderHandle), ProviderError> {
    let chat_base = env("PRISM_CHAT_URL").unwrap_or_else(|| DEFAULT_OPENAI_BASE.into());
    let chat_model = env("PRISM_CHAT_MODEL").unwrap_or_else(|| DEFAULT_CHAT_MODEL.into());
    let chat_key = key_from("PRISM_CHAT_KEY");
    let embed_base = env("PRISM_EMBED_URL").unwrap_or_else(|| DEFAULT_OPENAI_BASE.into());
    let embed_model = env("PRISM_EMBED_MODEL").unwrap_or_else(|| DEFAULT_EMBED_MODEL.into());
    let embed_key = key_from("PRISM_EMBED_KEY");
    let search_url = env("PRISM_SEARCH_URL")
        .ok_or_else(|| ProviderError::Unavailable("PRISM_SEARCH_URL is not set".into()))?;
    let search_key = Secret::new(env("PRISM_SEARCH_KEY").unwrap_or_default());

    let chat = ProviderHandle::chat(
        chat_model.clone(),
        HttpChat::new(&chat_base, chat_model, chat_key.clone(), retry.timeout)?,
    )
    .with_endpoint(chat_base, chat_key)
    .with_retry(retry.clone());
    let embed = ProviderHandle::embedder(
        embed_model.clone(),
        HttpEmbed::new(&embed_base, embed_model, embed_key.clone(), retry.timeout)?,
    )
    .with_endpoint(embed_base, embed_key)
    .with_retry(retry.clone());
    let search = ProviderHandle::searcher(
        "http-search",
        HttpSearch::new(&search_url, search_key.clone(), retry.timeout)?,
    )
    .with_endpoint(search_url, search_key)
    .with_retry(retry.clone());
    Ok((chat, embed, search))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serve the given `(status, body)` replies in order, one per connection.
    fn serve(replies: Vec<(u16, &'static str)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let h = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in replies {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body_in = vec![0u8; len];
                reader.read_exact(&mut body_in).unwrap();
                seen.push(format!(
                    "{}{}",
                    request_line.trim(),
                    String::from_utf8_lossy(&body_in)
                ));
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (addr, h)
    }

    #[test]
    fn chat_retries_server_errors_then_parses() {
        let (addr, h) = serve(vec![
            (503, "{}"),
            (
                200,
                r#"{"choices":[{"message":{"content":"hello"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}}"#,
            ),
        ]);
        let handle = ProviderHandle::chat(
            "http",
            HttpChat::new(&addr, "m", Secret::new("k"), Duration::from_secs(5)).unwrap(),
        )
        .with_retry(RetryPolicy::no_wait(3));
        let r = handle.chat_complete(&ChatRequest::new("sys", "hi", 0.0)).unwrap();
        assert_eq!(r.text, "hello");
        assert_eq!(r.usage.prompt_tokens, 3);
        let seen = h.join().unwrap();
        assert_eq!(seen.len(), 2);
        assert!(seen[1].starts_with("POST /chat/completions"));
        assert!(seen[1].contains("\"temperature\":0.0"));
    }

    #[test]
    fn status_codes_map_to_errors() {
        let (addr, h) = serve(vec![(401, "nope"), (200, "not json")]);
        let handle = ProviderHandle::chat(
            "http",
            HttpChat::new(&addr, "m", Secret::new("k"), Duration::from_secs(5)).unwrap(),
        )
        .with_retry(RetryPolicy::no_wait(1));
        let req = ChatRequest::new("", "hi", 0.0);
        assert!(matches!(handle.chat_complete(&req), Err(ProviderError::Auth(_))));
        assert!(matches!(
            handle.chat_complete(&req),
            Err(ProviderError::MalformedResponse(_))
        ));
        h.join().unwrap();
    }

    #[test]
    fn embeddings_and_search_parse() {
        let (addr, h) = serve(vec![
            (
                200,
                r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#,
            ),
            (
                200,
                r#"{"results":[{"url":"https://e.example","title":"t","snippet":"s"}]}"#,
            ),
        ]);
        let e = ProviderHandle::embedder(
            "e",
            HttpEmbed::new(&addr, "m", Secret::new("k"), Duration::from_secs(5)).unwrap(),
        );
        let v = e.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(v[0].values, vec![1.0, 0.0]);
        let s = ProviderHandle::searcher(
            "s",
            HttpSearch::new(
                &format!("{addr}/search"),
                Secret::default(),
                Duration::from_secs(5),
            )
            .unwrap(),
        );
        let r = s.search("x y", 3).unwrap();
        assert_eq!(r[0].snippet_or_body, "s");
        assert_eq!(r[0].rank, 1);
        let seen = h.join().unwrap();
        assert!(seen[1].starts_with("GET /search?q=x+y&limit=3"));
    }
}
