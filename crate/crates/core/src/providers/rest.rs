//! Generic JSON-over-HTTP adapter driven by a request template.
//!
//! String values in the template may contain placeholders: `{{prompt}}`,
//! `{{image_base64}}`, `{{media_type}}`, `{{image_data_url}}`, `{{model}}`,
//! `{{temperature}}` and `{{max_output_tokens}}`. A string that is exactly
//! `{{temperature}}` or `{{max_output_tokens}}` becomes a JSON number.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ProviderError, ProviderErrorKind};
use crate::prompt::ModelRequest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestSettings {
    /// Request body; a JSON string is parsed first.
    pub request_template: Value,
    /// JSON pointer to the model text in the reply, e.g. `/candidates/0/content/parts/0/text`.
    pub response_pointer: String,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_auth_prefix")]
    pub auth_prefix: String,
    /// Send the key as this query parameter instead of a header.
    #[serde(default)]
    pub auth_query_param: Option<String>,
}

fn default_auth_header() -> String {
    "Authorization".to_string()
}

fn default_auth_prefix() -> String {
    "Bearer ".to_string()
}

impl RestSettings {
    pub(super) fn render(&self, model: &str, req: &ModelRequest) -> Result<Vec<u8>, ProviderError> {
        let template = match &self.request_template {
            Value::String(s) => serde_json::from_str(s).map_err(|e| {
                ProviderError::new(ProviderErrorKind::InputError, format!("request_template is not JSON: {e}"))
            })?,
            other => other.clone(),
        };
        let vars = [
            ("{{prompt}}", req.prompt.as_str().to_string()),
            ("{{image_base64}}", req.image.data_base64.clone()),
            ("{{media_type}}", req.image.media_type.to_string()),
            ("{{image_data_url}}", req.image.data_url()),
            ("{{model}}", model.to_string()),
            ("{{temperature}}", req.decode_params.temperature.to_string()),
            ("{{max_output_tokens}}", req.decode_params.max_output_tokens.to_string()),
        ];
        let numbers = [
            ("{{temperature}}", Value::from(req.decode_params.temperature)),
            ("{{max_output_tokens}}", Value::from(req.decode_params.max_output_tokens)),
        ];
        let body = substitute(template, &vars, &numbers);
        Ok(serde_json::to_vec(&body).expect("rendered template serializes"))
    }

    pub(super) fn extract_text(&self, body: &str) -> Result<String, ProviderError> {
        let malformed = |msg: String| ProviderError::new(ProviderErrorKind::MalformedEndpointReply, msg);
        let value: Value = serde_json::from_str(body).map_err(|e| malformed(format!("reply is not JSON: {e}")))?;
        match value.pointer(&self.response_pointer) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(malformed(format!("{} is not a string: {other}", self.response_pointer))),
            None => Err(malformed(format!("{} not found in reply", self.response_pointer))),
        }
    }
}

fn substitute(value: Value, vars: &[(&str, String)], numbers: &[(&str, Value)]) -> Value {
    match value {
        Value::String(s) => {
            if let Some((_, n)) = numbers.iter().find(|(k, _)| *k == s) {
                return n.clone();
            }
            let mut out = s;
            for (k, v) in vars {
                if out.contains(k) {
                    out = out.replace(k, v);
                }
            }
            Value::String(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(|v| substitute(v, vars, numbers)).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, substitute(v, vars, numbers))).collect()),
        other => other,
    }
}
