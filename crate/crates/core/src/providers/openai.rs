//! OpenAI-compatible chat completions with one inline image.

use serde::{Deserialize, Serialize};

use super::{ProviderError, ProviderErrorKind};
use crate::prompt::ModelRequest;

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'static str,
    content: [ContentPart<'a>; 2],
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ContentPart<'a> {
    Text { text: &'a str },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Serialize)]
struct ImageUrl {
    url: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<Content>,
    #[serde(default)]
    refusal: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Content {
    Text(String),
    Parts(Vec<ResponsePart>),
}

#[derive(Deserialize)]
struct ResponsePart {
    #[serde(default)]
    text: Option<String>,
}

pub(super) fn request_body(model: &str, req: &ModelRequest) -> Vec<u8> {
    let body = ChatRequest {
        model,
        messages: [Message {
            role: "user",
            content: [
                ContentPart::Text {
                    text: req.prompt.as_str(),
                },
                ContentPart::ImageUrl {
                    image_url: ImageUrl {
                        url: req.image.data_url(),
                    },
                },
            ],
        }],
        temperature: req.decode_params.temperature,
        max_tokens: req.decode_params.max_output_tokens,
    };
    serde_json::to_vec(&body).expect("chat request serializes")
}

/// Pulls the assistant text out of a completion body. A refusal counts as text.
pub(super) fn extract_text(body: &str) -> Result<String, ProviderError> {
    let malformed = |msg: String| ProviderError::new(ProviderErrorKind::MalformedEndpointReply, msg);
    let parsed: ChatResponse = serde_json::from_str(body).map_err(|e| malformed(format!("completion body: {e}")))?;
    let message = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| malformed("completion has no choices".into()))?
        .message;
    match (message.content, message.refusal) {
        (Some(Content::Text(text)), _) => Ok(text),
        (Some(Content::Parts(parts)), _) => Ok(parts.into_iter().filter_map(|p| p.text).collect::<Vec<_>>().join("")),
        (None, Some(refusal)) => Ok(refusal),
        (None, None) => Err(malformed("completion message has no content".into())),
    }
}
