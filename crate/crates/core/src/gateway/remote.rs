//! HTTPS transports speaking the common chat-completion / embedding wire
//! schema, plus a text-pair classification endpoint for NLI.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    ChatRequest, ChatTransport, EmbeddingTransport, NliScores, NliTransport, RawCompletion, TransportError, Usage,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Full URL of the endpoint, e.g. `https://api.openai.com/v1/chat/completions`.
    pub url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

fn agent(timeout_secs: u64) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(Duration::from_secs(timeout_secs)).build()
}

fn classify(err: ureq::Error) -> TransportError {
    match err {
        ureq::Error::Status(code, resp) => {
            let body = resp.into_string().unwrap_or_default();
            let msg = format!("HTTP {code}: {}", body.chars().take(300).collect::<String>());
            if code == 408 || code == 429 || code >= 500 {
                TransportError::transient(msg)
            } else {
                TransportError::fatal(msg)
            }
        }
        ureq::Error::Transport(t) => TransportError::transient(t.to_string()),
    }
}

fn post(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: serde_json::Value,
) -> Result<serde_json::Value, TransportError> {
    let mut req = agent.post(url).set("Content-Type", "application/json");
    if let Some(k) = api_key {
        req = req.set("Authorization", &format!("Bearer {k}"));
    }
    let resp = req.send_json(body).map_err(classify)?;
    resp.into_json::<serde_json::Value>()
        .map_err(|e| TransportError::transient(format!("unreadable response body: {e}")))
}

pub struct RemoteChat {
    cfg: EndpointConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteChat {
    pub fn new(cfg: EndpointConfig, api_key: Option<String>) -> Self {
        let agent = agent(cfg.timeout_secs);
        Self { cfg, api_key, agent }
    }

    pub fn body(&self, req: &ChatRequest) -> serde_json::Value {
        let mut body = json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
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

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl ChatTransport for RemoteChat {
    fn model_tag(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, req: &ChatRequest) -> Result<RawCompletion, TransportError> {
        let value = post(&self.agent, &self.cfg.url, self.api_key.as_deref(), self.body(req))?;
        let parsed: ChatResponse =
            serde_json::from_value(value).map_err(|e| TransportError::fatal(format!("unexpected chat schema: {e}")))?;
        let text = parsed.choices.into_iter().next().and_then(|c| c.message.content).unwrap_or_default();
        let usage =
            parsed.usage.map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens });
        Ok(RawCompletion { text, usage })
    }
}

pub struct RemoteEmbedder {
    cfg: EndpointConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    max_input_tokens: usize,
}

impl RemoteEmbedder {
    pub fn new(cfg: EndpointConfig, api_key: Option<String>, max_input_tokens: usize) -> Self {
        let agent = agent(cfg.timeout_secs);
        Self { cfg, api_key, agent, max_input_tokens }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl EmbeddingTransport for RemoteEmbedder {
    fn model_tag(&self) -> &str {
        &self.cfg.model
    }

    fn max_input_tokens(&self) -> usize {
        self.max_input_tokens
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, TransportError> {
        let body = json!({ "model": self.cfg.model, "input": text });
        let value = post(&self.agent, &self.cfg.url, self.api_key.as_deref(), body)?;
        let parsed: EmbeddingResponse = serde_json::from_value(value)
            .map_err(|e| TransportError::fatal(format!("unexpected embedding schema: {e}")))?;
        parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| TransportError::fatal("embedding response without data"))
    }
}

/// Text-pair classifier: POST `{"inputs": {"text": premise, "text_pair": hypothesis}}`,
/// expecting a list of `{"label", "score"}` covering entailment, neutral and
/// contradiction (nested one level deep is also accepted).
pub struct RemoteNli {
    cfg: EndpointConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteNli {
    pub fn new(cfg: EndpointConfig, api_key: Option<String>) -> Self {
        let agent = agent(cfg.timeout_secs);
        Self { cfg, api_key, agent }
    }
}

#[derive(Deserialize)]
struct LabelScore {
    label: String,
    score: f64,
}

pub fn scores_from_labels(value: serde_json::Value) -> Result<NliScores, TransportError> {
    let value = match value {
        serde_json::Value::Array(ref outer) if outer.first().is_some_and(|v| v.is_array()) => outer[0].clone(),
        v => v,
    };
    let labels: Vec<LabelScore> =
        serde_json::from_value(value).map_err(|e| TransportError::fatal(format!("unexpected NLI schema: {e}")))?;
    let mut s = NliScores { entail: 0.0, neutral: 0.0, contradict: 0.0 };
    for l in labels {
        let name = l.label.to_ascii_lowercase();
        if name.starts_with("entail") {
            s.entail = l.score;
        } else if name.starts_with("neutral") {
            s.neutral = l.score;
        } else if name.starts_with("contradict") {
            s.contradict = l.score;
        }
    }
    Ok(s)
}

impl NliTransport for RemoteNli {
    fn model_tag(&self) -> &str {
        &self.cfg.model
    }

    fn score(&self, premise: &str, hypothesis: &str) -> Result<NliScores, TransportError> {
        let body = json!({ "inputs": { "text": premise, "text_pair": hypothesis } });
        scores_from_labels(post(&self.agent, &self.cfg.url, self.api_key.as_deref(), body)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// One-shot HTTP server answering each connection with the next canned
    /// (status, body); returns the request bodies it saw.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
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
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            bodies
        });
        (url, handle)
    }

    fn req() -> ChatRequest {
        ChatRequest {
            tag: "seeker".into(),
            system_prompt: "sys".into(),
            user_prompt: "hi".into(),
            temperature: 0.8,
            max_tokens: 16,
            seed: Some(3),
        }
    }

    #[test]
    fn chat_wire_schema_round_trip() {
        let (url, h) = serve(vec![(
            200,
            r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}],"usage":{"prompt_tokens":7,"completion_tokens":1}}"#.into(),
        )]);
        let chat = RemoteChat::new(
            EndpointConfig { url: format!("{url}/v1/chat/completions"), model: "m".into(), timeout_secs: 5 },
            Some("k".into()),
        );
        let out = chat.complete(&req()).unwrap();
        assert_eq!(out.text, "hello");
        assert_eq!(out.usage, Some(Usage { prompt_tokens: 7, completion_tokens: 1 }));
        let sent: serde_json::Value = serde_json::from_str(&h.join().unwrap()[0]).unwrap();
        assert_eq!(sent["model"], "m");
        assert_eq!(sent["messages"][1]["content"], "hi");
        assert_eq!(sent["seed"], 3);
        assert!(sent.get("tag").is_none());
    }

    #[test]
    fn status_codes_classify_as_transient_or_fatal() {
        let (url, h) = serve(vec![(429, "{}".into()), (400, "{}".into())]);
        let chat = RemoteChat::new(EndpointConfig { url, model: "m".into(), timeout_secs: 5 }, None);
        assert!(chat.complete(&req()).unwrap_err().transient);
        assert!(!chat.complete(&req()).unwrap_err().transient);
        h.join().unwrap();
    }

    #[test]
    fn embedding_and_nli_schemas() {
        let (url, h) = serve(vec![
            (200, r#"{"data":[{"embedding":[0.6,0.8]}]}"#.into()),
            (200, r#"[[{"label":"CONTRADICTION","score":0.8},{"label":"NEUTRAL","score":0.15},{"label":"ENTAILMENT","score":0.05}]]"#.into()),
        ]);
        let e = RemoteEmbedder::new(EndpointConfig { url: url.clone(), model: "e".into(), timeout_secs: 5 }, None, 100);
        assert_eq!(e.embed("x").unwrap(), vec![0.6, 0.8]);
        let n = RemoteNli::new(EndpointConfig { url, model: "n".into(), timeout_secs: 5 }, None);
        let s = n.score("p", "h").unwrap();
        assert_eq!(s.contradict, 0.8);
        s.validate().unwrap();
        let bodies = h.join().unwrap();
        let nli_body: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
        assert_eq!(nli_body["inputs"]["text_pair"], "h");
    }
}
