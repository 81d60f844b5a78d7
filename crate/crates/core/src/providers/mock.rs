use serde::Deserialize;
use std::collections::HashMap;
use std::fs;

use super::{MockSettings, ProviderError, ProviderErrorKind};
use crate::schema::SceneLabel;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureLine {
    frame_id: String,
    #[serde(default)]
    raw_text: Option<String>,
    #[serde(default)]
    label: Option<SceneLabel>,
}

/// Scripted replies keyed by frame id.
#[derive(Debug, Clone, Default)]
pub struct MockFixtures {
    replies: HashMap<String, String>,
    default_response: Option<String>,
}

impl MockFixtures {
    pub fn load(settings: &MockSettings) -> Result<Self, String> {
        let text = fs::read_to_string(&settings.fixtures).map_err(|e| format!("{}: {e}", settings.fixtures.display()))?;
        let mut fixtures = Self::parse(&text)?;
        fixtures.default_response = settings.default_response.clone();
        Ok(fixtures)
    }

    /// Parses fixture JSONL. A `label` entry replies with that label serialized as JSON.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut replies = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureLine = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            let reply = match (entry.raw_text, entry.label) {
                (Some(text), None) => text,
                (None, Some(label)) => serde_json::to_string_pretty(&label).expect("labels serialize"),
                _ => return Err(format!("line {}: exactly one of raw_text / label is required", i + 1)),
            };
            if replies.insert(entry.frame_id.clone(), reply).is_some() {
                return Err(format!("line {}: duplicate frame_id \"{}\"", i + 1, entry.frame_id));
            }
        }
        Ok(Self {
            replies,
            default_response: None,
        })
    }

    pub fn with_reply(mut self, frame_id: impl Into<String>, text: impl Into<String>) -> Self {
        self.replies.insert(frame_id.into(), text.into());
        self
    }

    pub fn reply(&self, frame_id: &str) -> Result<String, ProviderError> {
        self.replies
            .get(frame_id)
            .or(self.default_response.as_ref())
            .cloned()
            .ok_or_else(|| {
                ProviderError::new(
                    ProviderErrorKind::MockFixtureMissing,
                    format!("no fixture for frame \"{frame_id}\""),
                )
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_fixture_lines() {
        let text = "{\"frame_id\":\"a\",\"raw_text\":\"hello\"}\n\n{\"frame_id\":\"b\",\"label\":{\"Ambient\":1}}\n";
        let fx = MockFixtures::parse(text).unwrap();
        assert_eq!(fx.reply("a").unwrap(), "hello");
        assert_eq!(fx.reply("b").unwrap(), "{\n  \"Ambient\": 1\n}");
        assert_eq!(fx.reply("c").unwrap_err().kind, ProviderErrorKind::MockFixtureMissing);
        assert!(MockFixtures::parse("{\"frame_id\":\"a\"}").is_err());
        assert!(MockFixtures::parse("{\"frame_id\":\"a\",\"raw_text\":\"x\"}\n{\"frame_id\":\"a\",\"raw_text\":\"y\"}").is_err());
    }
}
