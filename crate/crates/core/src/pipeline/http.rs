//! OpenAI-compatible chat-completions client usable as both a generator and
//! a judge, with bounded retries and a replayable request transcript.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::analysis::{Judge, JudgeError};
use crate::flywheel::{Generator, GeneratorError};

const MAX_RETRIES: u32 = 3;

pub struct HttpClient {
    base_url: String,
    model: String,
    api_key: String,
    temperature: f64,
    timeout: Duration,
    client: reqwest::blocking::Client,
    transcript: Option<Mutex<std::fs::File>>,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    prompt: &'a str,
    continuation_of: Option<&'a str>,
    response: &'a str,
}

impl HttpClient {
    /// Builds a client. The API key is read from `key_env_var` now, at run
    /// time. When `transcript_path` is given, every exchange is appended
    /// there as JSON Lines for offline replay.
    pub fn new(
        base_url: &str,
        model: &str,
        key_env_var: &str,
        temperature: f64,
        timeout_secs: u64,
        transcript_path: Option<PathBuf>,
    ) -> Result<Self, GeneratorError> {
        let api_key = std::env::var(key_env_var).map_err(|_| {
            GeneratorError::Unavailable(format!("environment variable {key_env_var} is not set"))
        })?;
        let transcript = match transcript_path {
            Some(path) => Some(Mutex::new(
                std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| GeneratorError::Unavailable(e.to_string()))?,
            )),
            None => None,
        };
        Ok(HttpClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            temperature,
            timeout: Duration::from_secs(timeout_secs),
            client: reqwest::blocking::Client::new(),
            transcript,
        })
    }

    fn call(&self, content: &str) -> Result<String, String> {
        let request = ChatRequest {
            model: &self.model,
            messages: vec![ChatMessage { role: "user", content }],
            temperature: self.temperature,
        };
        let url = format!("{}/chat/completions", self.base_url);
        let mut last_error = String::new();
        for attempt in 0..MAX_RETRIES {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(500 * (1 << attempt)));
            }
            let result = self
                .client
                .post(&url)
                .bearer_auth(&self.api_key)
                .timeout(self.timeout)
                .json(&request)
                .send();
            match result {
                Ok(response) if response.status().is_success() => {
                    let body: ChatResponse = match response.json() {
                        Ok(b) => b,
                        Err(e) => {
                            last_error = format!("bad response body: {e}");
                            continue;
                        }
                    };
                    return body
                        .choices
                        .into_iter()
                        .next()
                        .map(|c| c.message.content)
                        .ok_or_else(|| "response contains no choices".to_string());
                }
                Ok(response) => {
                    last_error = format!("http status {}", response.status());
                    // client errors won't heal on retry
                    if response.status().is_client_error() {
                        break;
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(last_error)
    }

    fn record(&self, prompt: &str, continuation_of: Option<&str>, response: &str) {
        if let Some(transcript) = &self.transcript {
            let line = TranscriptLine { prompt, continuation_of, response };
            if let Ok(mut file) = transcript.lock() {
                let _ = serde_json::to_writer(&mut *file, &line);
                let _ = file.write_all(b"\n");
            }
        }
    }
}

impl Generator for HttpClient {
    fn complete(
        &self,
        prompt: &str,
        continuation_of: Option<&str>,
    ) -> Result<String, GeneratorError> {
        let content = match continuation_of {
            Some(prefix) => format!(
                "{prompt}\n\nContinue the following partial trajectory from where it stops, \
                 keeping the same tagged format. Output only the continuation.\n\n{prefix}"
            ),
            None => prompt.to_string(),
        };
        let response = self.call(&content).map_err(GeneratorError::Unavailable)?;
        self.record(prompt, continuation_of, &response);
        Ok(response)
    }

    fn name(&self) -> &str {
        &self.model
    }
}

impl Judge for HttpClient {
    fn respond(&self, prompt: &str) -> Result<String, JudgeError> {
        let response = self.call(prompt).map_err(JudgeError::JudgeUnavailable)?;
        self.record(prompt, None, &response);
        Ok(response)
    }
}
