//! JSONL dataset format.
//!
//! Line 1 is a header object carrying `format_version`. Every following line
//! is an object with a `kind` of `document`, `instance` or `annotation`.
//! Target surface text is not stored; it is recomputed from token offsets.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::{Map, Value};

use super::{
    CorpusError, Dataset, Document, InstanceRecord, QudAnnotation, Sentence, Split, TargetSpan,
};

pub const FORMAT_VERSION: &str = "1";

pub fn load_dataset(path: impl AsRef<Path>, format_version: &str) -> Result<Dataset, CorpusError> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, format_version)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    fs::write(path, to_jsonl(dataset))?;
    Ok(())
}

pub fn parse_dataset(text: &str, format_version: &str) -> Result<Dataset, CorpusError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (line, header) = lines.next().ok_or_else(|| parse_err(1, "format_version", "empty file"))?;
    let header = object(line, header)?;
    let found = str_field(&header, "format_version", line)?;
    if found != format_version {
        return Err(CorpusError::Version {
            expected: format_version.to_string(),
            found,
        });
    }

    let mut documents = Vec::new();
    let mut instances = Vec::new();
    let mut annotations = Vec::new();
    let mut raw_targets = Vec::new();
    for (line, raw) in lines {
        let obj = object(line, raw)?;
        match str_field(&obj, "kind", line)?.as_str() {
            "document" => documents.push(parse_document(&obj, line)?),
            "instance" => instances.push(parse_instance(&obj, line)?),
            "annotation" => {
                let (ann, target) = parse_annotation(&obj, line)?;
                annotations.push(ann);
                raw_targets.push(target);
            }
            other => {
                return Err(parse_err(
                    line,
                    "kind",
                    &format!("unknown kind `{other}` (expected document, instance or annotation)"),
                ))
            }
        }
    }

    // Targets are validated against their sentence inside Dataset::with_window.
    for (ann, target) in annotations.iter_mut().zip(raw_targets) {
        ann.target = target.map(|(sentence_index, start_token, end_token)| TargetSpan {
            sentence_index,
            start_token,
            end_token,
            surface_text: String::new(),
        });
    }
    Dataset::new(documents, instances, annotations)
}

#[derive(Serialize)]
struct HeaderLine<'a> {
    format_version: &'a str,
}

#[derive(Serialize)]
struct DocumentLine<'a> {
    kind: &'static str,
    doc_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_level: Option<&'a str>,
    sentences: &'a [Sentence],
}

#[derive(Serialize)]
struct InstanceLine<'a> {
    kind: &'static str,
    instance_id: &'a str,
    doc_id: &'a str,
    elab_index: usize,
    split: Split,
}

#[derive(Serialize)]
struct TargetLine {
    sentence_index: usize,
    start_token: usize,
    end_token: usize,
}

#[derive(Serialize)]
struct AnnotationLine<'a> {
    kind: &'static str,
    instance_id: &'a str,
    annotator_id: &'a str,
    question: &'a str,
    target: Option<TargetLine>,
    anchor_index: usize,
    is_organizational: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<&'a DateTime<Utc>>,
}

/// Canonical serialization: header, then documents, instances and annotations
/// in dataset order, one compact JSON object per line.
pub fn to_jsonl(dataset: &Dataset) -> String {
    let mut out = String::new();
    push_line(&mut out, &HeaderLine {
        format_version: FORMAT_VERSION,
    });
    for d in dataset.documents() {
        push_line(&mut out, &DocumentLine {
            kind: "document",
            doc_id: &d.doc_id,
            source_level: d.source_level.as_deref(),
            sentences: &d.sentences,
        });
    }
    for i in dataset.instances() {
        push_line(&mut out, &InstanceLine {
            kind: "instance",
            instance_id: &i.instance_id,
            doc_id: &i.doc_id,
            elab_index: i.elab_index,
            split: i.split,
        });
    }
    for a in dataset.annotations() {
        push_line(&mut out, &AnnotationLine {
            kind: "annotation",
            instance_id: &a.instance_id,
            annotator_id: &a.annotator_id,
            question: &a.question,
            target: a.target.as_ref().map(|t| TargetLine {
                sentence_index: t.sentence_index,
                start_token: t.start_token,
                end_token: t.end_token,
            }),
            anchor_index: a.anchor_index,
            is_organizational: a.is_organizational,
            timestamp: a.timestamp.as_ref(),
        });
    }
    out
}

fn push_line<T: Serialize>(out: &mut String, value: &T) {
    out.push_str(&serde_json::to_string(value).expect("dataset lines always serialize"));
    out.push('\n');
}

fn parse_document(obj: &Map<String, Value>, line: usize) -> Result<Document, CorpusError> {
    let doc_id = str_field(obj, "doc_id", line)?;
    let source_level = match obj.get("source_level") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(parse_err(line, "source_level", "expected a string")),
    };
    let raw = match obj.get("sentences") {
        Some(Value::Array(a)) => a,
        Some(_) => return Err(parse_err(line, "sentences", "expected an array")),
        None => return Err(parse_err(line, "sentences", "missing")),
    };
    let mut sentences = Vec::with_capacity(raw.len());
    for (pos, s) in raw.iter().enumerate() {
        let s = s
            .as_object()
            .ok_or_else(|| parse_err(line, &format!("sentences[{pos}]"), "expected an object"))?;
        let at = |f: &str| format!("sentences[{pos}].{f}");
        sentences.push(Sentence {
            index: usize_field(s, "index", line).map_err(|_| parse_err(line, &at("index"), "expected a non-negative integer"))?,
            text: str_field(s, "text", line).map_err(|_| parse_err(line, &at("text"), "expected a string"))?,
            is_elaboration: bool_field(s, "is_elaboration", line)
                .map_err(|_| parse_err(line, &at("is_elaboration"), "expected a boolean"))?,
        });
    }
    Document::new(doc_id, sentences, source_level)
}

fn parse_instance(obj: &Map<String, Value>, line: usize) -> Result<InstanceRecord, CorpusError> {
    let split = str_field(obj, "split", line)?;
    Ok(InstanceRecord {
        instance_id: str_field(obj, "instance_id", line)?,
        doc_id: str_field(obj, "doc_id", line)?,
        elab_index: usize_field(obj, "elab_index", line)?,
        split: split.parse().map_err(|e: String| parse_err(line, "split", &e))?,
    })
}

type RawTarget = Option<(usize, usize, usize)>;

fn parse_annotation(
    obj: &Map<String, Value>,
    line: usize,
) -> Result<(QudAnnotation, RawTarget), CorpusError> {
    let target = match obj.get("target") {
        None | Some(Value::Null) => None,
        Some(Value::Object(t)) => {
            let f = |name: &str| {
                usize_field(t, name, line).map_err(|_| {
                    parse_err(line, &format!("target.{name}"), "expected a non-negative integer")
                })
            };
            Some((f("sentence_index")?, f("start_token")?, f("end_token")?))
        }
        Some(_) => return Err(parse_err(line, "target", "expected an object or null")),
    };
    let timestamp = match obj.get("timestamp") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(
            DateTime::parse_from_rfc3339(s)
                .map_err(|e| parse_err(line, "timestamp", &e.to_string()))?
                .with_timezone(&Utc),
        ),
        Some(_) => return Err(parse_err(line, "timestamp", "expected an RFC 3339 string")),
    };
    let ann = QudAnnotation {
        instance_id: str_field(obj, "instance_id", line)?,
        annotator_id: str_field(obj, "annotator_id", line)?,
        question: str_field(obj, "question", line)?,
        target: None,
        anchor_index: usize_field(obj, "anchor_index", line)?,
        is_organizational: bool_field(obj, "is_organizational", line)?,
        timestamp,
    };
    Ok((ann, target))
}

fn parse_err(line: usize, field: &str, message: &str) -> CorpusError {
    CorpusError::Parse {
        line,
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn object(line: usize, raw: &str) -> Result<Map<String, Value>, CorpusError> {
    match serde_json::from_str::<Value>(raw) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(parse_err(line, "<line>", "expected a JSON object")),
        Err(e) => Err(parse_err(line, "<line>", &e.to_string())),
    }
}

fn str_field(obj: &Map<String, Value>, name: &str, line: usize) -> Result<String, CorpusError> {
    match obj.get(name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(parse_err(line, name, "expected a string")),
        None => Err(parse_err(line, name, "missing")),
    }
}

fn usize_field(obj: &Map<String, Value>, name: &str, line: usize) -> Result<usize, CorpusError> {
    match obj.get(name) {
        Some(Value::Number(n)) => n
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| parse_err(line, name, "expected a non-negative integer")),
        Some(_) => Err(parse_err(line, name, "expected a non-negative integer")),
        None => Err(parse_err(line, name, "missing")),
    }
}

fn bool_field(obj: &Map<String, Value>, name: &str, line: usize) -> Result<bool, CorpusError> {
    match obj.get(name) {
        Some(Value::Bool(b)) => Ok(*b),
        Some(_) => Err(parse_err(line, name, "expected a boolean")),
        None => Err(parse_err(line, name, "missing")),
    }
}
