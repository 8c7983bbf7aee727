//! Anchor-prompt request/response protocol for a vision-language model
//! served behind an OpenAI-style chat-completions endpoint.

use std::path::Path;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use log::warn;
use serde_json::{json, Value};

use super::PromptTexts;
use crate::error::{Error, Result};

/// Instruction text sent with every image pair.
pub const ANCHOR_TEMPLATE: &str = include_str!("anchor_template.txt");

pub const LABEL_ANCHOR: &str = "Anchor-prompt:";
pub const LABEL_CAPTION_A: &str = "Caption A:";
pub const LABEL_CAPTION_B: &str = "Caption B:";

#[derive(Debug, Clone, PartialEq)]
pub struct VlmRequest {
    pub model: String,
    pub payload: Value,
}

fn mime_for(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        "image/png"
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        "image/jpeg"
    } else {
        "application/octet-stream"
    }
}

fn data_url(bytes: &[u8]) -> String {
    format!("data:{};base64,{}", mime_for(bytes), STANDARD.encode(bytes))
}

/// Builds the chat payload: template text followed by image A then image B.
pub fn build_vlm_request(image_a: &[u8], image_b: &[u8], model: &str) -> VlmRequest {
    let payload = json!({
        "model": model,
        "temperature": 0,
        "messages": [{
            "role": "user",
            "content": [
                { "type": "text", "text": ANCHOR_TEMPLATE },
                { "type": "image_url", "image_url": { "url": data_url(image_a) } },
                { "type": "image_url", "image_url": { "url": data_url(image_b) } }
            ]
        }]
    });
    VlmRequest {
        model: model.to_owned(),
        payload,
    }
}

pub fn build_vlm_request_from_paths(a: &Path, b: &Path, model: &str) -> Result<VlmRequest> {
    let read = |p: &Path| {
        std::fs::read(p).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))
    };
    Ok(build_vlm_request(&read(a)?, &read(b)?, model))
}

fn strip_markup(s: &str) -> &str {
    s.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '-' | '#' | '>' | '`' | '_'))
}

fn clean_value(s: &str) -> String {
    let v = s
        .trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_' | '`'))
        .trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_' | '`'));
    let v = match v.strip_prefix('[').and_then(|x| x.strip_suffix(']')) {
        Some(inner) => inner.trim(),
        None => v,
    };
    v.to_owned()
}

/// If `line` starts with `label` (case-insensitive, after list/emphasis
/// markers), returns the text after it.
fn after_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let body = strip_markup(line);
    let head = body.get(..label.len())?;
    if head.eq_ignore_ascii_case(label) {
        Some(&body[label.len()..])
    } else {
        None
    }
}

fn is_label(line: &str) -> bool {
    [LABEL_ANCHOR, LABEL_CAPTION_A, LABEL_CAPTION_B]
        .iter()
        .any(|l| after_label(line, l).is_some())
}

fn find_label(lines: &[&str], label: &str) -> Option<String> {
    for (i, line) in lines.iter().enumerate() {
        let Some(rest) = after_label(line, label) else {
            continue;
        };
        let value = clean_value(rest);
        if !value.is_empty() {
            return Some(value);
        }
        // Label on its own line, value on the next non-empty one.
        if let Some(next) = lines[i + 1..].iter().find(|l| !l.trim().is_empty()) {
            if !is_label(next) {
                let value = clean_value(strip_markup(next));
                if !value.is_empty() {
                    return Some(value);
                }
            }
        }
    }
    None
}

/// Extracts the three labelled lines from a free-form model response.
pub fn parse_vlm_response(text: &str) -> Result<PromptTexts> {
    let lines: Vec<&str> = text.lines().collect();
    let mut missing = Vec::new();
    let mut get = |label: &str| {
        find_label(&lines, label).unwrap_or_else(|| {
            missing.push(label.trim_end_matches(':').to_owned());
            String::new()
        })
    };
    let anchor = get(LABEL_ANCHOR);
    let caption_a = get(LABEL_CAPTION_A);
    let caption_b = get(LABEL_CAPTION_B);
    if !missing.is_empty() {
        return Err(Error::Parse {
            message: format!("missing {}", missing.join(", ")),
            raw: text.to_owned(),
        });
    }
    Ok(PromptTexts {
        anchor,
        caption_a,
        caption_b,
    })
}

/// Pulls the assistant text out of a response body. Accepts chat-completion
/// JSON, a few common single-field JSON shapes, or plain text.
pub fn response_text(body: &str) -> String {
    if let Ok(v) = serde_json::from_str::<Value>(body) {
        if let Some(s) = v.pointer("/choices/0/message/content").and_then(Value::as_str) {
            return s.to_owned();
        }
        for key in ["response", "text", "content", "output"] {
            if let Some(s) = v.get(key).and_then(Value::as_str) {
                return s.to_owned();
            }
        }
    }
    body.to_owned()
}

#[derive(Debug, Clone)]
pub struct VlmClient {
    pub url: String,
    pub timeout: Duration,
    pub retries: u32,
}

impl VlmClient {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            timeout,
            retries: 1,
        }
    }

    fn post_once(&self, client: &reqwest::blocking::Client, req: &VlmRequest) -> Result<String> {
        let resp = client
            .post(&self.url)
            .json(&req.payload)
            .send()
            .map_err(|e| Error::Vlm(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| Error::Vlm(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Vlm(format!("HTTP {status}: {body}")));
        }
        Ok(body)
    }

    /// Sends the request (one retry on failure) and parses the triplet.
    pub fn caption(&self, req: &VlmRequest) -> Result<PromptTexts> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| Error::Vlm(e.to_string()))?;
        let mut attempt = 0;
        let body = loop {
            match self.post_once(&client, req) {
                Ok(body) => break body,
                Err(e) if attempt < self.retries => {
                    warn!("vlm request to {} failed ({e}), retrying", self.url);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        parse_vlm_response(&response_text(&body))
    }
}
