//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{CompletionProvider, CompletionRequest, ProviderError};

#[derive(Debug, Clone)]
pub struct RemoteProvider {
    url: String,
    model: String,
    temperature: f64,
    max_retries: u32,
    backoff: Duration,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Retry(ProviderError),
    Fatal(ProviderError),
}

impl RemoteProvider {
    /// `endpoint` is the server base URL; requests go to `{endpoint}/v1/chat/completions`.
    pub fn new(
        endpoint: &str,
        model: &str,
        temperature: f64,
        max_retries: u32,
        timeout: Duration,
        backoff: Duration,
        api_key: Option<String>,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: format!("{}/v1/chat/completions", endpoint.trim_end_matches('/')),
            model: model.to_owned(),
            temperature,
            max_retries,
            backoff,
            api_key,
            agent,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, body: &str) -> Result<String, Attempt> {
        let mut req = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(Attempt::Retry(ProviderError::Timeout { attempts: 0 })),
            Err(e) => {
                return Err(Attempt::Retry(ProviderError::Transport {
                    attempts: 0,
                    detail: e.to_string(),
                }))
            }
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| {
            Attempt::Retry(ProviderError::Transport {
                attempts: 0,
                detail: format!("reading body: {e}"),
            })
        })?;
        if !(200..300).contains(&status) {
            let err = ProviderError::Status { code: status, body: text };
            return Err(if status == 429 || status >= 500 {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| {
            Attempt::Fatal(ProviderError::Transport {
                attempts: 0,
                detail: format!("malformed response: {e}"),
            })
        })?;
        Ok(parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}

impl CompletionProvider for RemoteProvider {
    fn kind(&self) -> &str {
        "remote"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn is_remote(&self) -> bool {
        true
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt.full_text}],
            "temperature": self.temperature,
        })
        .to_string();
        let attempts = self.max_retries + 1;
        let mut last = None;
        for i in 0..attempts {
            if i > 0 {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(i - 1));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e.with_attempts(i + 1)),
                Err(Attempt::Retry(e)) => {
                    log::debug!("attempt {} of {attempts} to {} failed: {e}", i + 1, self.url);
                    last = Some(e);
                }
            }
        }
        let last = last.expect("at least one attempt");
        Err(match last {
            ProviderError::Timeout { .. } => ProviderError::Timeout { attempts },
            ProviderError::Status { code, body } => ProviderError::Transport {
                attempts,
                detail: format!("HTTP {code}: {body}"),
            },
            other => other.with_attempts(attempts),
        })
    }
}
