use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::chat::{ChatMessage, ChatModel};
use super::prompts::{render_template, PromptTemplates};
use super::report::extract_json_object;
use crate::http::ClientError;
use crate::types::Zip;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedQuery {
    pub zip: Option<Zip>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryParse {
    pub query: ParsedQuery,
    /// Set when part of the model output was unusable.
    pub diagnostic: Option<String>,
}

fn date_field(obj: &serde_json::Map<String, Value>, key: &str, notes: &mut Vec<String>) -> Option<NaiveDate> {
    match obj.get(key)? {
        Value::Null => None,
        Value::String(s) => {
            let s = s.trim();
            let head = s.get(..10).unwrap_or(s);
            match NaiveDate::parse_from_str(head, "%Y-%m-%d") {
                Ok(d) => Some(d),
                Err(_) => {
                    notes.push(format!("unparseable {key} date {s:?}"));
                    None
                }
            }
        }
        other => {
            notes.push(format!("unexpected {key} value {other}"));
            None
        }
    }
}

/// Asks the model to extract `{zip, start, end}` from a chat message.
/// A lone date fills both ends; an inverted pair is swapped. Malformed
/// model output yields an all-null query with a diagnostic.
pub fn parse_user_query(
    message: &str,
    model: &dyn ChatModel,
    templates: &PromptTemplates,
) -> Result<QueryParse, ClientError> {
    let messages = [
        ChatMessage::system(templates.get("query_parser_system.txt")),
        ChatMessage::user(render_template(templates.get("query_parser_user.txt"), &[("message", message)])),
    ];
    let raw = model.complete(&messages)?;
    let Some(obj) = extract_json_object(&raw) else {
        return Ok(QueryParse {
            query: ParsedQuery::default(),
            diagnostic: Some("query parser returned no JSON object".into()),
        });
    };
    let mut notes = Vec::new();
    let zip = match obj.get("zip") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let s = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            match Zip::new(&s) {
                Ok(z) => Some(z),
                Err(e) => {
                    notes.push(e.to_string());
                    None
                }
            }
        }
    };
    let mut start = date_field(&obj, "start", &mut notes);
    let mut end = date_field(&obj, "end", &mut notes);
    match (start, end) {
        (Some(s), None) => end = Some(s),
        (None, Some(e)) => start = Some(e),
        (Some(s), Some(e)) if s > e => {
            notes.push(format!("start {s} after end {e}; swapped"));
            (start, end) = (Some(e), Some(s));
        }
        _ => {}
    }
    Ok(QueryParse {
        query: ParsedQuery { zip, start, end },
        diagnostic: (!notes.is_empty()).then(|| notes.join("; ")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysts::MockChat;

    fn run(response: &str) -> QueryParse {
        parse_user_query("how bad was 77096?", &MockChat::with_default(response), &PromptTemplates::builtin()).unwrap()
    }

    fn d(s: &str) -> Option<NaiveDate> {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
    }

    #[test]
    fn passthrough() {
        let q = run(r#"{"zip":"77096","start":"2017-08-27","end":"2017-08-28"}"#);
        assert_eq!(q.query.zip.unwrap().as_str(), "77096");
        assert_eq!((q.query.start, q.query.end), (d("2017-08-27"), d("2017-08-28")));
        assert!(q.diagnostic.is_none());
    }

    #[test]
    fn single_date() {
        let q = run(r#"{"zip":null,"start":"2017-08-29","end":null}"#).query;
        assert_eq!((q.zip, q.start, q.end), (None, d("2017-08-29"), d("2017-08-29")));
    }

    #[test]
    fn malformed() {
        let q = run("sorry, I cannot help");
        assert_eq!(q.query, ParsedQuery::default());
        assert!(q.diagnostic.is_some());
    }

    #[test]
    fn inverted_and_bad_zip() {
        let q = run(r#"{"zip":"7709","start":"2017-09-02","end":"2017-08-30"}"#);
        assert_eq!(q.query.zip, None);
        assert_eq!((q.query.start, q.query.end), (d("2017-08-30"), d("2017-09-02")));
        assert!(q.diagnostic.unwrap().contains("swapped"));
    }

    #[test]
    fn message_is_embedded_literally() {
        let m = MockChat::with_default("{}");
        let msg = "flooding at {zip_code} in \"77002\"";
        let rendered = render_template(PromptTemplates::builtin().get("query_parser_user.txt"), &[("message", msg)]);
        assert!(rendered.starts_with("User Message: \"flooding at {zip_code} in \"77002\"\""));
        parse_user_query(msg, &m, &PromptTemplates::builtin()).unwrap();
    }
}
