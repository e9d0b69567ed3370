//! Documents, marked elaborations, QUD annotations and their on-disk format.

mod io;
mod types;
mod window;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use io::{load_dataset, parse_dataset, save_dataset, to_jsonl, FORMAT_VERSION};
pub use types::{
    anchor_distance, ContextWindow, Document, ElaborationInstance, QudAnnotation, Sentence,
    Split, TargetSpan,
};
pub use window::{extract_window, extract_window_with, WindowSpec};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("sentence index {index} out of range for a document of {len} sentences")]
    Range { index: i64, len: usize },
    #[error("format version mismatch: expected `{expected}`, found `{found}`")]
    Version { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The per-instance fields stored on disk; the context window is derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance_id: String,
    pub doc_id: String,
    pub elab_index: usize,
    pub split: Split,
}

/// A validated corpus. Immutable once built; every cross-reference resolves.
#[derive(Debug, Clone)]
pub struct Dataset {
    documents: Vec<Document>,
    instances: Vec<ElaborationInstance>,
    annotations: Vec<QudAnnotation>,
    window: WindowSpec,
    doc_index: HashMap<String, usize>,
    instance_index: HashMap<String, usize>,
}

/// One document with the instances and annotations that refer to it.
#[derive(Debug, Clone)]
pub struct DocumentBundle<'a> {
    pub document: &'a Document,
    pub instances: Vec<&'a ElaborationInstance>,
    pub annotations: Vec<&'a QudAnnotation>,
}

impl Dataset {
    pub fn new(
        documents: Vec<Document>,
        instances: Vec<InstanceRecord>,
        annotations: Vec<QudAnnotation>,
    ) -> Result<Self, CorpusError> {
        Self::with_window(WindowSpec::default(), documents, instances, annotations)
    }

    pub fn with_window(
        window: WindowSpec,
        documents: Vec<Document>,
        instances: Vec<InstanceRecord>,
        annotations: Vec<QudAnnotation>,
    ) -> Result<Self, CorpusError> {
        let mut doc_index = HashMap::new();
        for (i, d) in documents.iter().enumerate() {
            d.validate()?;
            if doc_index.insert(d.doc_id.clone(), i).is_some() {
                return Err(CorpusError::Integrity(format!(
                    "duplicate doc_id {}",
                    d.doc_id
                )));
            }
        }

        let mut instance_index = HashMap::new();
        let mut built = Vec::with_capacity(instances.len());
        for rec in instances {
            let doc = doc_index
                .get(&rec.doc_id)
                .map(|&i| &documents[i])
                .ok_or_else(|| {
                    CorpusError::Integrity(format!(
                        "instance {} refers to unknown document {}",
                        rec.instance_id, rec.doc_id
                    ))
                })?;
            let sentence = doc.sentence(rec.elab_index)?;
            if !sentence.is_elaboration {
                return Err(CorpusError::Integrity(format!(
                    "instance {}: sentence {} of {} is not marked as an elaboration",
                    rec.instance_id, rec.elab_index, rec.doc_id
                )));
            }
            if instance_index
                .insert(rec.instance_id.clone(), built.len())
                .is_some()
            {
                return Err(CorpusError::Integrity(format!(
                    "duplicate instance_id {}",
                    rec.instance_id
                )));
            }
            built.push(ElaborationInstance {
                context: extract_window_with(doc, rec.elab_index, window)?,
                instance_id: rec.instance_id,
                doc_id: rec.doc_id,
                elab_index: rec.elab_index,
                split: rec.split,
            });
        }

        let mut checked = Vec::with_capacity(annotations.len());
        for mut ann in annotations {
            let inst = instance_index
                .get(&ann.instance_id)
                .map(|&i| &built[i])
                .ok_or_else(|| {
                    CorpusError::Integrity(format!(
                        "annotation by {} refers to unknown instance {}",
                        ann.annotator_id, ann.instance_id
                    ))
                })?;
            let doc = &documents[doc_index[&inst.doc_id]];
            if let Some(t) = &ann.target {
                ann.target = Some(TargetSpan::new(
                    doc,
                    t.sentence_index,
                    t.start_token,
                    t.end_token,
                )?);
            }
            ann.validate(doc)?;
            checked.push(ann);
        }

        Ok(Dataset {
            documents,
            instances: built,
            annotations: checked,
            window,
            doc_index,
            instance_index,
        })
    }

    /// Same documents and instances with a different annotation set.
    pub fn with_annotations(&self, annotations: Vec<QudAnnotation>) -> Result<Self, CorpusError> {
        let records = self.instances.iter().map(InstanceRecord::from).collect();
        Self::with_window(self.window, self.documents.clone(), records, annotations)
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn instances(&self) -> &[ElaborationInstance] {
        &self.instances
    }

    pub fn annotations(&self) -> &[QudAnnotation] {
        &self.annotations
    }

    pub fn window(&self) -> WindowSpec {
        self.window
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.doc_index.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn instance(&self, instance_id: &str) -> Option<&ElaborationInstance> {
        self.instance_index
            .get(instance_id)
            .map(|&i| &self.instances[i])
    }

    pub fn document_of(&self, instance: &ElaborationInstance) -> &Document {
        &self.documents[self.doc_index[&instance.doc_id]]
    }

    /// Annotations keyed by instance id, in file order within each group.
    pub fn annotations_by_instance(&self) -> BTreeMap<&str, Vec<&QudAnnotation>> {
        let mut groups: BTreeMap<&str, Vec<&QudAnnotation>> = BTreeMap::new();
        for a in &self.annotations {
            groups.entry(a.instance_id.as_str()).or_default().push(a);
        }
        groups
    }

    pub fn bundles(&self) -> Vec<DocumentBundle<'_>> {
        let mut bundles: Vec<DocumentBundle<'_>> = self
            .documents
            .iter()
            .map(|document| DocumentBundle {
                document,
                instances: Vec::new(),
                annotations: Vec::new(),
            })
            .collect();
        for inst in &self.instances {
            bundles[self.doc_index[&inst.doc_id]].instances.push(inst);
        }
        for ann in &self.annotations {
            let inst = &self.instances[self.instance_index[&ann.instance_id]];
            bundles[self.doc_index[&inst.doc_id]].annotations.push(ann);
        }
        bundles
    }

    pub fn split(&self, split: Split) -> Vec<&ElaborationInstance> {
        self.instances.iter().filter(|i| i.split == split).collect()
    }

    /// SHA-256 of the canonical JSONL serialization.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(to_jsonl(self).as_bytes()))
    }
}

impl From<&ElaborationInstance> for InstanceRecord {
    fn from(i: &ElaborationInstance) -> Self {
        InstanceRecord {
            instance_id: i.instance_id.clone(),
            doc_id: i.doc_id.clone(),
            elab_index: i.elab_index,
            split: i.split,
        }
    }
}
