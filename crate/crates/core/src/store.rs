//! On-disk store: a directory with the three canonical files and a manifest.
//!
//! ```text
//! <store>/
//!   activations.csv    image_id,n0,...,n{C-1}
//!   annotations.json   {"<image_id>": ["<concept>", ...]}
//!   assignments.json   {"<concept>": [<index>, ...] | [[<index>, ...], ...]}
//!   manifest.json      {"dataset_id", "images", "neurons", "sha256", "gallery"?}
//! ```
//!
//! The manifest hash covers the three canonical files, so re-ingesting the
//! same inputs yields the same manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{
    ingest_activations, ingest_annotations, ingest_assignments, ingest_gallery, read_activations, read_annotations,
    read_assignments, IngestOptions,
};
use crate::model::{validate_bundle, ActivationMatrix, AnnotationSet, AssignmentTable, DatasetBundle, Warning};

pub const ACTIVATIONS_FILE: &str = "activations.csv";
pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const ASSIGNMENTS_FILE: &str = "assignments.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_id: String,
    pub images: usize,
    pub neurons: usize,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gallery: Option<BTreeMap<String, String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Store {
    pub bundle: DatasetBundle,
    pub assignments: AssignmentTable,
    pub manifest: Manifest,
}

struct Canonical {
    activations: String,
    annotations: String,
    assignments: String,
}

impl Canonical {
    fn build(bundle: &DatasetBundle, assignments: &AssignmentTable) -> Self {
        Canonical {
            activations: render_activations(&bundle.activation),
            annotations: render_annotations(&bundle.annotations),
            assignments: render_assignments(assignments),
        }
    }

    fn digest(&self) -> String {
        content_hash(&[
            (ACTIVATIONS_FILE, self.activations.as_bytes()),
            (ANNOTATIONS_FILE, self.annotations.as_bytes()),
            (ASSIGNMENTS_FILE, self.assignments.as_bytes()),
        ])
    }
}

fn content_hash(files: &[(&str, &[u8])]) -> String {
    let mut h = Sha256::new();
    for (name, bytes) in files {
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

/// Shortest round-trip float formatting keeps persisted values bit-exact.
pub fn render_activations(m: &ActivationMatrix) -> String {
    let mut out = String::with_capacity(m.values().len() * 8);
    out.push_str("image_id");
    for n in 0..m.neuron_count() {
        let _ = write!(out, ",n{n}");
    }
    out.push('\n');
    for (id, row) in m.rows() {
        out.push_str(&csv_field(id));
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.trim() != s {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn render_annotations(a: &AnnotationSet) -> String {
    let mut s = serde_json::to_string_pretty(&a.entries).expect("string maps serialize");
    s.push('\n');
    s
}

fn render_assignments(t: &AssignmentTable) -> String {
    let grouped: BTreeMap<&str, serde_json::Value> = t
        .grouped()
        .into_iter()
        .map(|(concept, ensembles)| {
            let value = if ensembles.len() == 1 {
                serde_json::json!(ensembles[0])
            } else {
                serde_json::json!(ensembles)
            };
            (concept, value)
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&grouped).expect("json values serialize");
    s.push('\n');
    s
}

impl Store {
    pub fn new(
        bundle: DatasetBundle,
        assignments: AssignmentTable,
        gallery: Option<BTreeMap<String, String>>,
    ) -> Self {
        let sha256 = Canonical::build(&bundle, &assignments).digest();
        let manifest = Manifest {
            dataset_id: bundle.dataset_id().to_owned(),
            images: bundle.activation.image_count(),
            neurons: bundle.neuron_count(),
            sha256,
            gallery,
        };
        Store {
            bundle,
            assignments,
            manifest,
        }
    }

    /// Reads and validates the three input files plus an optional gallery
    /// (`{"<image_id>": "<asset path>"}`) whose ids must exist in the matrix.
    pub fn from_files(
        activations: &Path,
        annotations: &Path,
        assignments: &Path,
        gallery: Option<&Path>,
        dataset_id: &str,
        opts: IngestOptions,
    ) -> Result<(Store, Vec<Warning>)> {
        let (matrix, mut warnings) = ingest_activations(activations, dataset_id, opts)?;
        let (ann, w) = ingest_annotations(annotations, dataset_id)?;
        warnings.extend(w);
        let table = ingest_assignments(assignments)?;
        let (bundle, w) = validate_bundle(matrix, ann, &table)?;
        warnings.extend(w);
        let gallery = gallery.map(ingest_gallery).transpose()?;
        if let Some(missing) = gallery
            .iter()
            .flat_map(|g| g.keys())
            .find(|id| bundle.activation.row_index(id).is_none())
        {
            return Err(Error::UnknownImage {
                image_id: missing.clone(),
            });
        }
        Ok((Store::new(bundle, table, gallery), warnings))
    }

    pub fn dataset_id(&self) -> &str {
        &self.manifest.dataset_id
    }

    /// Writes the store into `dir`, creating it when absent.
    pub fn persist(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let canonical = Canonical::build(&self.bundle, &self.assignments);
        let mut manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        manifest.push('\n');
        for (name, text) in [
            (ACTIVATIONS_FILE, &canonical.activations),
            (ANNOTATIONS_FILE, &canonical.annotations),
            (ASSIGNMENTS_FILE, &canonical.assignments),
            (MANIFEST_FILE, &manifest),
        ] {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Loads and re-validates a store, checking the manifest hash.
    pub fn load(dir: impl AsRef<Path>) -> Result<(Store, Vec<Warning>)> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read(&path).map_err(|e| Error::io(path, e))
        };
        let manifest: Manifest = serde_json::from_slice(&read(MANIFEST_FILE)?)
            .map_err(|e| Error::Json(format!("{MANIFEST_FILE}: {e}")))?;
        let activations = read(ACTIVATIONS_FILE)?;
        let annotations = read(ANNOTATIONS_FILE)?;
        let assignments = read(ASSIGNMENTS_FILE)?;

        let digest = content_hash(&[
            (ACTIVATIONS_FILE, &activations),
            (ANNOTATIONS_FILE, &annotations),
            (ASSIGNMENTS_FILE, &assignments),
        ]);
        if digest != manifest.sha256 {
            return Err(Error::Store {
                path: dir.to_owned(),
                message: format!("content hash {digest} does not match manifest {}", manifest.sha256),
            });
        }

        let (matrix, mut warnings) =
            read_activations(activations.as_slice(), &manifest.dataset_id, IngestOptions::default())?;
        let (ann, w) = read_annotations(annotations.as_slice(), &manifest.dataset_id)?;
        warnings.extend(w);
        let table = read_assignments(assignments.as_slice())?;
        let (bundle, w) = validate_bundle(matrix, ann, &table)?;
        warnings.extend(w);

        if bundle.activation.image_count() != manifest.images || bundle.neuron_count() != manifest.neurons {
            return Err(Error::Store {
                path: dir.to_owned(),
                message: "manifest counts do not match the activation matrix".into(),
            });
        }
        Ok((
            Store {
                bundle,
                assignments: table,
                manifest,
            },
            warnings,
        ))
    }
}
