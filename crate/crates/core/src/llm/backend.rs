//! Chat-completion backends: a deterministic offline mock, a response
//! cache keyed by prompt hash, and (behind the `http` feature) a generic
//! JSON chat API client.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::summarizer::AbstractiveSummarizer;

use super::prompt::SUMMARIZE_INSTRUCTION;
use super::LlmError;

/// A synchronous chat-completion service: one prompt in, one answer out.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

/// Token shaped like a planted relation cue: `c<type>g<group>` plus a
/// final `h` (head) or `t` (tail). Returns `(type, group, is_head)`.
fn parse_cue(token: &str) -> Option<(usize, usize, bool)> {
    let rest = token.strip_prefix('c')?;
    let g_at = rest.find('g')?;
    let type_index: usize = rest[..g_at].parse().ok()?;
    let rest = &rest[g_at + 1..];
    let is_head = match rest.chars().last()? {
        'h' => true,
        't' => false,
        _ => return None,
    };
    let group: usize = rest[..rest.len() - 1].parse().ok()?;
    Some((type_index, group, is_head))
}

/// Token shaped like a planted trigger: `trg` plus digits.
fn is_trigger_token(token: &str) -> bool {
    token
        .strip_prefix("trg")
        .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
}

/// Offline stand-in for a chat model, keyed entirely off the prompt text.
///
/// For relation prompts it reads the context lines and answers type `r`
/// exactly when some line holds both the head trigger and a head-side cue
/// `c<r>g<g>h` while another (or the same) line holds the tail trigger and
/// the matching tail-side cue `c<r>g<g>t`. For summarization prompts it
/// keeps the cue and trigger tokens. Both rules understand the synthetic
/// corpus's token conventions, so accuracy degrades exactly when a context
/// drops a cue-bearing sentence.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl MockBackend {
    fn answer_relation(&self, prompt: &str) -> String {
        let lines: Vec<&str> = prompt.lines().collect();
        // The query is the last Context: block.
        let Some(start) = lines.iter().rposition(|l| *l == "Context:") else {
            return "NONE".to_string();
        };
        let context: Vec<Vec<&str>> = lines[start + 1..]
            .iter()
            .take_while(|l| !l.starts_with("Pair:"))
            .map(|l| {
                let body = l.split_once(": ").map_or(*l, |(_, rest)| rest);
                body.split_whitespace().collect()
            })
            .collect();
        let Some((head, tail)) = super::prompt::pair_surfaces(prompt) else {
            return "NONE".to_string();
        };
        // Type names, in index order, from the instruction block.
        let type_names: Vec<&str> = lines
            .iter()
            .take_while(|&&l| l != "Context:")
            .filter_map(|l| l.strip_prefix("- ")?.split_once(':').map(|(name, _)| name))
            .collect();
        let mut candidates: Vec<(usize, usize)> = Vec::new();
        for line in &context {
            for token in line {
                if let Some((type_index, group, true)) = parse_cue(token) {
                    if line.contains(&head.as_str()) {
                        candidates.push((type_index, group));
                    }
                }
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        for (type_index, group) in candidates {
            let tail_cue = format!("c{type_index}g{group}t");
            let confirmed = context.iter().any(|line| {
                line.contains(&tail_cue.as_str()) && line.contains(&tail.as_str())
            });
            if confirmed {
                if let Some(name) = type_names.get(type_index) {
                    return format!("{name}: {head} -> {tail}");
                }
            }
        }
        "NONE".to_string()
    }

    fn answer_summary(&self, prompt: &str) -> String {
        let body = prompt.strip_prefix(SUMMARIZE_INSTRUCTION).unwrap_or(prompt);
        let tokens: Vec<&str> = body.split_whitespace().collect();
        let kept: Vec<&str> = tokens
            .iter()
            .copied()
            .filter(|t| is_trigger_token(t) || parse_cue(t).is_some())
            .collect();
        if kept.is_empty() {
            tokens.into_iter().take(5).collect::<Vec<_>>().join(" ")
        } else {
            kept.join(" ")
        }
    }
}

impl ChatBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        if prompt.starts_with(SUMMARIZE_INSTRUCTION) {
            Ok(self.answer_summary(prompt))
        } else {
            Ok(self.answer_relation(prompt))
        }
    }
}

/// Hex SHA-256 of a prompt; the cache filename and transcript key.
pub fn prompt_sha256(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    prompt_sha256: String,
    answer: String,
}

/// Directory of `{sha256(prompt)}.json` response files.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: &Path) -> Result<Self, LlmError> {
        std::fs::create_dir_all(dir)?;
        Ok(ResponseCache { dir: dir.to_path_buf() })
    }

    fn path_for(&self, prompt: &str) -> PathBuf {
        self.dir.join(format!("{}.json", prompt_sha256(prompt)))
    }

    /// A previously stored answer, if any. Unreadable entries count as
    /// misses.
    pub fn get(&self, prompt: &str) -> Option<String> {
        let text = std::fs::read_to_string(self.path_for(prompt)).ok()?;
        serde_json::from_str::<CacheRecord>(&text).ok().map(|r| r.answer)
    }

    pub fn put(&self, prompt: &str, answer: &str) -> Result<(), LlmError> {
        let record = CacheRecord {
            prompt_sha256: prompt_sha256(prompt),
            answer: answer.to_string(),
        };
        let mut text = serde_json::to_string_pretty(&record)?;
        text.push('\n');
        std::fs::write(self.path_for(prompt), text)?;
        Ok(())
    }
}

/// Adapter: drive cluster summarization through a chat backend, so any
/// relation-labeling service doubles as the abstractive summarizer.
pub struct ChatSummarizer<'a> {
    pub backend: &'a dyn ChatBackend,
}

impl AbstractiveSummarizer for ChatSummarizer<'_> {
    fn summarize(&self, cluster_text: &str) -> Result<String, String> {
        let prompt = format!("{SUMMARIZE_INSTRUCTION}\n{cluster_text}");
        self.backend.complete(&prompt).map_err(|e| e.to_string())
    }
}

/// Connection settings for a JSON chat-completion endpoint.
#[cfg(feature = "http")]
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// 0 for evaluation determinism (as far as the service honors it).
    pub temperature: f64,
    pub max_tokens: usize,
    /// Environment variable holding the bearer token; `None` sends no
    /// authorization header.
    pub api_key_env: Option<String>,
    pub max_retries: u32,
    /// First retry delay; doubles per attempt.
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

#[cfg(feature = "http")]
impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "http://localhost:8080/v1/chat/completions".to_string(),
            model: "default".to_string(),
            temperature: 0.0,
            max_tokens: 256,
            api_key_env: None,
            max_retries: 3,
            backoff_ms: 200,
            timeout_secs: 60,
        }
    }
}

/// Client for role/content JSON chat APIs.
#[cfg(feature = "http")]
pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[cfg(feature = "http")]
impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| LlmError::MissingKey { var: var.clone() })?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Backend { message: e.to_string() })?;
        Ok(HttpBackend { config, api_key, client })
    }

    fn call_once(&self, prompt: &str) -> Result<String, RetryOrFail> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        });
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| RetryOrFail::Retry(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(RetryOrFail::Retry(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(RetryOrFail::Fail(format!("status {status}")));
        }
        let value: serde_json::Value =
            response.json().map_err(|e| RetryOrFail::Fail(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(String::from)
            .ok_or_else(|| RetryOrFail::Fail("no message content in response".to_string()))
    }
}

#[cfg(feature = "http")]
enum RetryOrFail {
    Retry(String),
    Fail(String),
}

#[cfg(feature = "http")]
impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let mut delay = std::time::Duration::from_millis(self.config.backoff_ms);
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            match self.call_once(prompt) {
                Ok(answer) => return Ok(answer),
                Err(RetryOrFail::Fail(message)) => {
                    return Err(LlmError::Backend { message });
                }
                Err(RetryOrFail::Retry(message)) => {
                    last = message;
                    if attempt < self.config.max_retries {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(LlmError::Backend {
            message: format!(
                "gave up after {} attempts: {last}",
                self.config.max_retries + 1
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cue_and_trigger_tokens_are_recognized() {
        assert_eq!(parse_cue("c2g1h"), Some((2, 1, true)));
        assert_eq!(parse_cue("c0g3t"), Some((0, 3, false)));
        assert_eq!(parse_cue("c10g12h"), Some((10, 12, true)));
        assert_eq!(parse_cue("cg1h"), None);
        assert_eq!(parse_cue("c1g2x"), None);
        assert_eq!(parse_cue("word"), None);
        assert!(is_trigger_token("trg7"));
        assert!(!is_trigger_token("trg"));
        assert!(!is_trigger_token("trgx"));
    }

    fn relation_prompt(context: &[&str], head: &str, tail: &str) -> String {
        let mut out = String::from(
            "Task: label the directed relation between two event triggers in the context.\n\
             Relation types:\n\
             - CAUSE: x.\n- PRECONDITION: x.\n- SUBEVENT: x.\n\
             Reply with one line.\n\nNow label this pair.\nContext:\n",
        );
        for line in context {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!("Pair: HEAD `{head}` -> TAIL `{tail}`\nAnswer:"));
        out
    }

    #[test]
    fn mock_answers_follow_the_cue_rule() {
        let mock = MockBackend;
        // Head trigger + head cue in one line, tail trigger + tail cue in
        // another, same type and group -> that type.
        let prompt = relation_prompt(
            &["S0: w c1g0h trg4 w", "S3: w c1g0t trg9 w"],
            "trg4",
            "trg9",
        );
        assert_eq!(mock.complete(&prompt).unwrap(), "PRECONDITION: trg4 -> trg9");

        // Group mismatch -> no relation.
        let prompt = relation_prompt(
            &["S0: w c1g0h trg4 w", "S3: w c1g1t trg9 w"],
            "trg4",
            "trg9",
        );
        assert_eq!(mock.complete(&prompt).unwrap(), "NONE");

        // Cue present but tail trigger missing from the tail line -> none.
        let prompt = relation_prompt(
            &["S0: w c1g0h trg4 w", "S3: w c1g0t trg2 w"],
            "trg4",
            "trg9",
        );
        assert_eq!(mock.complete(&prompt).unwrap(), "NONE");

        // Determinism: same prompt, same answer.
        let prompt = relation_prompt(
            &["S0: w c0g2h trg1 w", "S1: w c0g2t trg2 w"],
            "trg1",
            "trg2",
        );
        assert_eq!(
            mock.complete(&prompt).unwrap(),
            mock.complete(&prompt).unwrap()
        );
        assert_eq!(mock.complete(&prompt).unwrap(), "CAUSE: trg1 -> trg2");
    }

    #[test]
    fn mock_summaries_keep_cues_and_triggers() {
        let mock = MockBackend;
        let prompt = format!(
            "{SUMMARIZE_INSTRUCTION}\nfiller trg3 more c0g1h words trg8 c0g1t tail"
        );
        assert_eq!(mock.complete(&prompt).unwrap(), "trg3 c0g1h trg8 c0g1t");
        // No markers at all: first five tokens.
        let prompt = format!("{SUMMARIZE_INSTRUCTION}\na b c d e f g");
        assert_eq!(mock.complete(&prompt).unwrap(), "a b c d e");
    }

    #[test]
    fn cache_round_trips_and_misses_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(cache.get("prompt"), None);
        cache.put("prompt", "answer").unwrap();
        assert_eq!(cache.get("prompt"), Some("answer".to_string()));
        assert_eq!(cache.get("other"), None);
        // Key is the prompt hash, so distinct prompts never collide.
        cache.put("other", "different").unwrap();
        assert_eq!(cache.get("prompt"), Some("answer".to_string()));
        assert_eq!(cache.get("other"), Some("different".to_string()));
    }

    #[test]
    fn chat_summarizer_routes_through_the_backend() {
        let mock = MockBackend;
        let summarizer = ChatSummarizer { backend: &mock };
        let out = summarizer.summarize("plain trg5 words c2g0h here").unwrap();
        assert_eq!(out, "trg5 c2g0h");
    }
}
