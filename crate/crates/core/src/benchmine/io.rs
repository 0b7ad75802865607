//! JSON-lines readers and writers for candidates, annotations and
//! benchmarks.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::{AnnotationRecord, BenchError, BenchmarkCase, CandidateCase, Provenance};
use crate::script::comment_body;

pub fn write_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

fn read_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, BenchError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BenchError::Format {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_candidates(text: &str) -> Result<Vec<CandidateCase>, BenchError> {
    read_jsonl(text)
}

pub fn read_annotations(text: &str) -> Result<Vec<AnnotationRecord>, BenchError> {
    read_jsonl(text)
}

const ID_KEYS: &[&str] = &["id", "case_id", "idx", "task_id"];
const CONTEXT_KEYS: &[&str] = &["context", "c", "code_context"];
const INTENT_KEYS: &[&str] = &["intent", "i", "query", "nl"];
const TARGET_KEYS: &[&str] = &["target", "t", "target_code", "code"];

fn field<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| obj.get(*k))
}

fn text_value(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        // Some archives store code as a list of lines.
        Value::Array(items) => items.iter().map(|i| i.as_str().map(str::to_string)).collect::<Option<Vec<_>>>().map(|lines| {
            if lines.iter().all(|l| l.ends_with('\n')) {
                lines.concat()
            } else {
                lines.join("\n")
            }
        }),
        _ => None,
    }
}

/// Read a benchmark file: this tool's JSON-lines format, or a released
/// archive given either as JSON lines or as one JSON array. Field names
/// are matched against common aliases (`id`/`case_id`, `context`/`c`,
/// `intent`/`i`/`query`, `target`/`t`/`target_code`); an intent written as
/// a comment keeps its leading whitespace in `intent_prefix`.
pub fn read_benchmark(text: &str) -> Result<Vec<BenchmarkCase>, BenchError> {
    let trimmed = text.trim_start();
    let values: Vec<(usize, Value)> = if trimmed.starts_with('[') {
        let v: Vec<Value> = serde_json::from_str(trimmed).map_err(|e| BenchError::Format {
            line: e.line(),
            message: e.to_string(),
        })?;
        v.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect()
    } else {
        read_jsonl::<Value>(text)?.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect()
    };
    values
        .into_iter()
        .map(|(line, v)| {
            let bad = |what: &str| BenchError::Format {
                line,
                message: format!("missing or invalid {what}"),
            };
            let obj = v.as_object().ok_or_else(|| bad("record"))?;
            let id = field(obj, ID_KEYS).and_then(text_value).unwrap_or_else(|| line.to_string());
            let context = field(obj, CONTEXT_KEYS).and_then(text_value).ok_or_else(|| bad("context"))?;
            let raw_intent = field(obj, INTENT_KEYS).and_then(text_value).ok_or_else(|| bad("intent"))?;
            let target = field(obj, TARGET_KEYS).and_then(text_value).ok_or_else(|| bad("target"))?;
            let prefix = obj
                .get("intent_prefix")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| {
                    let lead = raw_intent.len() - raw_intent.trim_start().len();
                    raw_intent[..lead].to_string()
                });
            let intent = comment_body(raw_intent.trim()).trim().to_string();
            let provenance = obj
                .get("provenance")
                .and_then(|p| serde_json::from_value::<Provenance>(p.clone()).ok())
                .unwrap_or_default();
            Ok(BenchmarkCase {
                id,
                context,
                intent,
                intent_prefix: prefix,
                target,
                provenance,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn native_round_trip() {
        let case = BenchmarkCase {
            id: "a#L3".into(),
            context: "import os\n".into(),
            intent: "list files".into(),
            intent_prefix: "    ".into(),
            target: "os.listdir('.')\n".into(),
            provenance: Provenance {
                source: "a".into(),
                line: 3,
            },
        };
        let text = write_jsonl(std::slice::from_ref(&case));
        assert_eq!(read_benchmark(&text).unwrap(), vec![case]);
    }

    #[test]
    fn aliases_and_array_layout() {
        let text = r#"[{"case_id": 7, "c": ["import os\n", "x = 1\n"], "i": "  # list files", "t": "os.listdir()"}]"#;
        let b = read_benchmark(text).unwrap();
        assert_eq!(b[0].id, "7");
        assert_eq!(b[0].context, "import os\nx = 1\n");
        assert_eq!((b[0].intent.as_str(), b[0].intent_prefix.as_str()), ("list files", "  "));
        assert!(read_benchmark(r#"{"id": 1}"#).is_err());
    }
}
