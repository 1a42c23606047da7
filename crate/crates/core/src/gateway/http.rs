//! OpenAI-compatible chat-completions backend.
//!
//! Each role has its own endpoint, model name and API-key environment
//! variable. Keys are read once at construction and never logged.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, Completion, GatewayError, ModelBackend, PromptBundle, Role};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleEndpoint {
    /// Base URL; `/chat/completions` is appended unless already present.
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
}

impl RoleEndpoint {
    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

struct ResolvedRole {
    endpoint: RoleEndpoint,
    api_key: String,
}

pub struct HttpBackend {
    roles: BTreeMap<Role, ResolvedRole>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    /// Resolves every role's API key from the environment. A missing key is
    /// an authentication error raised before any request is made.
    pub fn new(roles: BTreeMap<Role, RoleEndpoint>, timeout: Duration) -> Result<Self, GatewayError> {
        Self::with_env(roles, timeout, |name| std::env::var(name).ok())
    }

    pub fn with_env(
        roles: BTreeMap<Role, RoleEndpoint>,
        timeout: Duration,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, GatewayError> {
        let mut resolved = BTreeMap::new();
        for role in Role::ALL {
            let endpoint = roles.get(&role).cloned().ok_or_else(|| GatewayError::Fatal {
                role,
                message: "no endpoint configured for this role".into(),
            })?;
            let api_key = env(&endpoint.api_key_env).filter(|k| !k.trim().is_empty()).ok_or_else(|| GatewayError::Auth {
                role,
                message: format!("environment variable {} is not set", endpoint.api_key_env),
            })?;
            resolved.insert(role, ResolvedRole { endpoint, api_key });
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Fatal { role: Role::Reasoning, message: e.to_string() })?;
        Ok(Self { roles: resolved, client })
    }
}

/// Chat-completions request body with an optional inline image.
pub(crate) fn request_body(model: &str, bundle: &PromptBundle) -> Value {
    let mut content = vec![json!({"type": "text", "text": bundle.user})];
    if let Some(img) = &bundle.image {
        let data = base64::engine::general_purpose::STANDARD.encode(&img.bytes);
        content.push(json!({
            "type": "image_url",
            "image_url": {"url": format!("data:{};base64,{data}", img.media_type)}
        }));
    }
    json!({
        "model": model,
        "messages": [
            {"role": "system", "content": bundle.system},
            {"role": "user", "content": content},
        ],
    })
}

pub(crate) fn parse_response(body: &Value) -> Result<Completion, BackendError> {
    let message = &body["choices"][0]["message"]["content"];
    let text = match message {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join(""),
        _ => return Err(BackendError::Fatal(format!("response has no message content: {body}"))),
    };
    Ok(Completion {
        text,
        prompt_tokens: body["usage"]["prompt_tokens"].as_u64().map(|v| v as u32),
        completion_tokens: body["usage"]["completion_tokens"].as_u64().map(|v| v as u32),
        latency_ms: 0,
    })
}

pub(crate) fn classify_status(status: u16, body: &str) -> BackendError {
    let snippet: String = body.chars().take(200).collect();
    match status {
        401 | 403 => BackendError::Auth(format!("HTTP {status}")),
        408 | 409 | 425 | 429 | 500..=599 => BackendError::Transient(format!("HTTP {status}: {snippet}")),
        _ => BackendError::Fatal(format!("HTTP {status}: {snippet}")),
    }
}

impl ModelBackend for HttpBackend {
    fn complete(&self, role: Role, bundle: &PromptBundle) -> Result<Completion, BackendError> {
        let r = self.roles.get(&role).ok_or_else(|| BackendError::Fatal(format!("role {role} not configured")))?;
        let started = Instant::now();
        let resp = self
            .client
            .post(r.endpoint.url())
            .bearer_auth(&r.api_key)
            .json(&request_body(&r.endpoint.model, bundle))
            .send()
            .map_err(|e| if e.is_timeout() { BackendError::Timeout } else { BackendError::Transient(e.to_string()) })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| BackendError::Transient(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| BackendError::Transient(format!("bad JSON body: {e}")))?;
        let mut completion = parse_response(&body)?;
        completion.latency_ms = started.elapsed().as_millis() as u64;
        Ok(completion)
    }

    fn model_id(&self, role: Role) -> String {
        self.roles.get(&role).map(|r| r.endpoint.model.clone()).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, ImageAttachment, RetryPolicy};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::Arc;

    fn endpoints(base: &str) -> BTreeMap<Role, RoleEndpoint> {
        Role::ALL
            .into_iter()
            .map(|r| (r, RoleEndpoint { endpoint: base.to_string(), model: format!("m-{r}"), api_key_env: "UXPROBE_TEST_KEY".into() }))
            .collect()
    }

    #[test]
    fn missing_key_is_auth_error() {
        let err = HttpBackend::with_env(endpoints("http://127.0.0.1:1"), Duration::from_secs(1), |_| None).err().unwrap();
        assert!(matches!(err, GatewayError::Auth { .. }));
        assert!(err.to_string().contains("UXPROBE_TEST_KEY"));
    }

    #[test]
    fn body_shape_with_image() {
        let b = PromptBundle::new("sys", "usr")
            .with_image(Some(ImageAttachment { media_type: "image/png".into(), bytes: vec![0x89, 0x50] }));
        let body = request_body("m", &b);
        assert_eq!(body["messages"][0]["content"], "sys");
        assert_eq!(body["messages"][1]["content"][0]["text"], "usr");
        assert_eq!(body["messages"][1]["content"][1]["image_url"]["url"], "data:image/png;base64,iVA=");
    }

    #[test]
    fn response_and_status_mapping() {
        let body = json!({"choices": [{"message": {"content": "hi"}}], "usage": {"prompt_tokens": 5, "completion_tokens": 1}});
        let c = parse_response(&body).unwrap();
        assert_eq!((c.text.as_str(), c.prompt_tokens, c.completion_tokens), ("hi", Some(5), Some(1)));
        assert!(matches!(classify_status(401, ""), BackendError::Auth(_)));
        assert!(classify_status(503, "").is_retryable());
        assert!(classify_status(429, "").is_retryable());
        assert!(!classify_status(400, "").is_retryable());
    }

    /// Serves canned HTTP responses, one per connection, and captures requests.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                seen.push(format!("{head}{}", String::from_utf8_lossy(&buf)));
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
            seen
        });
        (format!("http://{addr}/v1"), handle)
    }

    #[test]
    fn retries_server_errors_over_http() {
        let ok = json!({"choices": [{"message": {"content": "click(1, 2)"}}]}).to_string();
        let (base, handle) = serve(vec![(503, "busy".into()), (200, ok)]);
        let backend =
            HttpBackend::with_env(endpoints(&base), Duration::from_secs(5), |_| Some("sk-test".into())).unwrap();
        let gw = Gateway::new(Arc::new(backend), RetryPolicy::default()).with_sleeper(|_| {});
        let out = gw.complete(Role::Reasoning, &PromptBundle::new("s", "u")).unwrap();
        assert_eq!(out, "click(1, 2)");
        let calls = gw.drain_calls();
        assert_eq!(calls[0].retries.len(), 1);
        assert_eq!(calls[0].model, "m-reasoning");
        let requests = handle.join().unwrap();
        assert!(requests[1].starts_with("POST /v1/chat/completions"));
        assert!(requests[1].to_ascii_lowercase().contains("authorization: bearer sk-test"));
        assert!(requests[1].contains("\"model\":\"m-reasoning\""));
        // the key never reaches the call record
        assert!(!serde_json::to_string(&calls).unwrap().contains("sk-test"));
    }
}
