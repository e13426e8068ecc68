//! Generic HTTP agent backend.
//!
//! Speaks a minimal protocol: `POST {endpoint}/v1/act` with a JSON body
//! `{"role", "image_ref", "context", "format"}`; a 200 reply carries
//! `{"location", "confidence", "explanation"}`. Anything else — refused
//! connections, non-200 statuses, timeouts — maps to `Unavailable`, and
//! malformed bodies are parsed leniently rather than crashing the
//! orchestrator.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::{
    AgentBackend, AgentError, AgentId, ImageRef, LocationAnswer, ReviewComment, Utterance,
};

pub const DEFAULT_TIMEOUT_SECS: u64 = 30;

#[derive(Serialize)]
struct ActRequest<'a> {
    role: &'a str,
    image_ref: &'a str,
    context: &'a [String],
    format: &'a str,
}

pub struct HttpAgent {
    id: AgentId,
    endpoint: String,
    client: ureq::Agent,
}

impl HttpAgent {
    pub fn new(id: AgentId, endpoint: impl Into<String>, timeout: Option<Duration>) -> Self {
        let timeout = timeout.unwrap_or(Duration::from_secs(DEFAULT_TIMEOUT_SECS));
        let client = ureq::AgentBuilder::new()
            .timeout_connect(timeout)
            .timeout(timeout)
            .build();
        Self {
            id,
            endpoint: endpoint.into(),
            client,
        }
    }

    fn act(
        &self,
        role: &str,
        image: &ImageRef,
        context: &[String],
    ) -> Result<LocationAnswer, AgentError> {
        let url = format!("{}/v1/act", self.endpoint.trim_end_matches('/'));
        let body = ActRequest {
            role,
            image_ref: &image.id,
            context,
            format: "location/confidence/explanation",
        };
        let response = self
            .client
            .post(&url)
            .send_json(&body)
            .map_err(|e| AgentError::Unavailable(format!("{}: {e}", self.id.name)))?;
        if response.status() != 200 {
            return Err(AgentError::Unavailable(format!(
                "{}: status {}",
                self.id.name,
                response.status()
            )));
        }
        let text = response
            .into_string()
            .map_err(|e| AgentError::Unavailable(format!("{}: {e}", self.id.name)))?;
        parse_reply(&text)
    }
}

/// Lenient reply parsing: JSON with the three fields when possible,
/// then labelled lines, then the whole text as the location with
/// confidence 50.
pub fn parse_reply(body: &str) -> Result<LocationAnswer, AgentError> {
    if body.trim().is_empty() {
        return Err(AgentError::Unavailable("empty reply body".into()));
    }
    if let Ok(value) = serde_json::from_str::<Value>(body) {
        if let Some(answer) = reply_from_json(&value) {
            return Ok(answer);
        }
    }
    let mut fields: BTreeMap<&str, String> = BTreeMap::new();
    for line in body.lines() {
        for label in ["location", "confidence", "explanation"] {
            let prefix = format!("{label}:");
            let lower = line.trim().to_lowercase();
            if lower.starts_with(&prefix) && !fields.contains_key(label) {
                let value = line.trim()[prefix.len()..].trim().to_string();
                fields.insert(label, value);
            }
        }
    }
    if let Some(location) = fields.get("location").filter(|l| !l.is_empty()) {
        let confidence = fields
            .get("confidence")
            .and_then(|c| c.trim_end_matches('%').trim().parse::<f64>().ok())
            .unwrap_or(50.0)
            .clamp(0.0, 100.0);
        let explanation = fields
            .get("explanation")
            .cloned()
            .filter(|e| !e.is_empty())
            .unwrap_or_else(|| "(no explanation given)".to_string());
        return LocationAnswer::new(location.clone(), confidence, explanation);
    }
    LocationAnswer::new(body.trim().to_string(), 50.0, "(unstructured reply)")
}

fn reply_from_json(value: &Value) -> Option<LocationAnswer> {
    let obj = value.as_object()?;
    let location = obj.get("location")?.as_str()?.to_string();
    if location.is_empty() {
        return None;
    }
    let confidence = match obj.get("confidence") {
        Some(Value::Number(n)) => n.as_f64()?,
        Some(Value::String(s)) => s.trim_end_matches('%').trim().parse().ok()?,
        _ => 50.0,
    }
    .clamp(0.0, 100.0);
    let explanation = obj
        .get("explanation")
        .and_then(|e| e.as_str())
        .filter(|e| !e.is_empty())
        .unwrap_or("(no explanation given)")
        .to_string();
    LocationAnswer::new(location, confidence, explanation).ok()
}

impl AgentBackend for HttpAgent {
    fn id(&self) -> &AgentId {
        &self.id
    }

    fn answer(
        &self,
        image: &ImageRef,
        retrieval_enabled: bool,
    ) -> Result<LocationAnswer, AgentError> {
        let context = if retrieval_enabled {
            vec!["retrieval: enabled".to_string()]
        } else {
            Vec::new()
        };
        self.act("answer", image, &context)
    }

    fn review(
        &self,
        image: &ImageRef,
        subject: &LocationAnswer,
        _retrieval_enabled: bool,
    ) -> Result<ReviewComment, AgentError> {
        let context = vec![subject.canonical_text()];
        let reply = self.act("review", image, &context)?;
        Ok(ReviewComment {
            reviewer: self.id.clone(),
            text: format!("{}: {}", reply.location_text, reply.explanation),
            confidence_pct: reply.confidence_pct,
        })
    }

    fn summarize(
        &self,
        image: &ImageRef,
        own: &LocationAnswer,
        reviews: &[ReviewComment],
    ) -> Result<LocationAnswer, AgentError> {
        let mut context = vec![own.canonical_text()];
        context.extend(reviews.iter().map(|r| r.canonical_text()));
        self.act("summarize", image, &context)
    }

    fn discuss(
        &self,
        image: &ImageRef,
        snapshot: &[Utterance],
        own_latest: &LocationAnswer,
        _round: u32,
    ) -> Result<LocationAnswer, AgentError> {
        // Context economy: only the freshest position per speaker goes
        // over the wire; the full history stays in the audit log.
        let mut latest: BTreeMap<usize, &Utterance> = BTreeMap::new();
        for u in snapshot {
            let keep = latest
                .get(&u.speaker.index)
                .is_none_or(|prev| u.seq > prev.seq);
            if keep {
                latest.insert(u.speaker.index, u);
            }
        }
        let mut context: Vec<String> = latest
            .values()
            .map(|u| format!("speaker {}: {}", u.speaker.name, u.answer.canonical_text()))
            .collect();
        context.push(format!(
            "your current position: {}",
            own_latest.canonical_text()
        ));
        self.act("discuss", image, &context)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_well_formed_json() {
        let a = parse_reply(r#"{"location": "Paris", "confidence": 82.5, "explanation": "tower"}"#)
            .unwrap();
        assert_eq!(a.location_text, "Paris");
        assert_eq!(a.confidence_pct, 82.5);
        assert_eq!(a.explanation, "tower");
    }

    #[test]
    fn parse_json_with_string_confidence_and_clamp() {
        let a = parse_reply(r#"{"location": "Paris", "confidence": "120%", "explanation": "x"}"#)
            .unwrap();
        assert_eq!(a.confidence_pct, 100.0);
    }

    #[test]
    fn parse_labelled_lines() {
        let a =
            parse_reply("Location: Lisbon\nConfidence: 64%\nExplanation: tiled facades\n").unwrap();
        assert_eq!(a.location_text, "Lisbon");
        assert_eq!(a.confidence_pct, 64.0);
        assert_eq!(a.explanation, "tiled facades");
    }

    #[test]
    fn parse_free_text_falls_back_to_location() {
        let a = parse_reply("Probably somewhere in Kyoto, Japan.").unwrap();
        assert_eq!(a.location_text, "Probably somewhere in Kyoto, Japan.");
        assert_eq!(a.confidence_pct, 50.0);
    }

    #[test]
    fn parse_empty_body_is_unavailable() {
        assert!(matches!(
            parse_reply("   "),
            Err(AgentError::Unavailable(_))
        ));
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let agent = HttpAgent::new(
            AgentId {
                index: 0,
                name: "remote".into(),
            },
            // Reserved TEST-NET address: nothing listens there.
            "http://127.0.0.1:9",
            Some(Duration::from_millis(200)),
        );
        let img = ImageRef {
            id: "img".into(),
            content_seed: 0,
            region_key: "r".into(),
            truth_text: "t".into(),
        };
        assert!(matches!(
            agent.answer(&img, false),
            Err(AgentError::Unavailable(_))
        ));
    }
}
