//! Readers for the activation CSV, annotations JSON and assignments JSON.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read};
use std::marker::PhantomData;
use std::path::Path;

use serde::de::{Deserialize, Deserializer, MapAccess, Visitor};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{ActivationMatrix, AnnotationSet, AssignmentTable, ConceptAssignment, Ensemble, NeuronId, Warning};

#[derive(Clone, Copy, Debug, Default)]
pub struct IngestOptions {
    /// Clamp negative activations to 0 instead of rejecting the file.
    pub allow_negative: bool,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn ingest_activations(
    path: impl AsRef<Path>,
    dataset_id: &str,
    opts: IngestOptions,
) -> Result<(ActivationMatrix, Vec<Warning>)> {
    read_activations(open(path.as_ref())?, dataset_id, opts)
}

/// Parses `image_id,n0,n1,...,n{C-1}` rows. Row order is preserved.
pub fn read_activations<R: Read>(
    reader: R,
    dataset_id: &str,
    opts: IngestOptions,
) -> Result<(ActivationMatrix, Vec<Warning>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => return Err(Error::BadHeader("file is empty".into())),
    };
    let neuron_count = check_header(&header)?;

    let mut image_ids = Vec::new();
    let mut values = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut clamped = 0usize;
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != neuron_count + 1 {
            return Err(Error::MalformedRow {
                line,
                message: format!(
                    "expected {} columns, found {}",
                    neuron_count + 1,
                    record.len()
                ),
            });
        }
        let image_id = &record[0];
        if image_id.is_empty() {
            return Err(Error::MalformedRow {
                line,
                message: "empty image_id".into(),
            });
        }
        if !seen.insert(image_id.to_owned()) {
            return Err(Error::DuplicateImage {
                line,
                image_id: image_id.to_owned(),
            });
        }
        for (col, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::MalformedRow {
                line,
                message: format!("column n{col}: {field:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    line,
                    column: format!("n{col}"),
                    value: field.to_owned(),
                });
            }
            let v = if v < 0.0 {
                if !opts.allow_negative {
                    return Err(Error::NegativeActivation {
                        line,
                        column: format!("n{col}"),
                        value: v,
                    });
                }
                clamped += 1;
                0.0
            } else {
                v
            };
            values.push(v);
        }
        image_ids.push(image_id.to_owned());
    }
    if image_ids.is_empty() {
        return Err(Error::MalformedRow {
            line: 2,
            message: "no data rows".into(),
        });
    }

    let mut warnings = Vec::new();
    if clamped > 0 {
        warnings.push(Warning::ClampedNegatives { count: clamped });
    }
    let matrix = ActivationMatrix::new(dataset_id, image_ids, neuron_count, values)?;
    Ok((matrix, warnings))
}

fn check_header(header: &csv::StringRecord) -> Result<usize> {
    let mut fields = header.iter();
    let first = fields.next().unwrap_or_default().trim_start_matches('\u{feff}');
    if first != "image_id" {
        return Err(Error::BadHeader(format!(
            "first column must be image_id, found {first:?}"
        )));
    }
    let mut count = 0;
    for (i, name) in fields.enumerate() {
        if name != format!("n{i}") {
            return Err(Error::BadHeader(format!(
                "column {} must be n{i}, found {name:?}",
                i + 1
            )));
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::BadHeader("no neuron columns".into()));
    }
    Ok(count)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::MalformedRow {
        line,
        message: e.to_string(),
    }
}

/// JSON object read as key/value pairs in document order, duplicates kept.
struct OrderedEntries<V>(Vec<(String, V)>);

impl<'de, V: Deserialize<'de>> Deserialize<'de> for OrderedEntries<V> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct EntriesVisitor<V>(PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for EntriesVisitor<V> {
            type Value = OrderedEntries<V>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::with_capacity(map.size_hint().unwrap_or(0));
                while let Some(entry) = map.next_entry::<String, V>()? {
                    out.push(entry);
                }
                Ok(OrderedEntries(out))
            }
        }

        d.deserialize_map(EntriesVisitor(PhantomData))
    }
}

fn parse_entries<R: Read, V: for<'de> Deserialize<'de>>(reader: R) -> Result<Vec<(String, V)>> {
    let entries: OrderedEntries<V> =
        serde_json::from_reader(reader).map_err(|e| Error::Json(e.to_string()))?;
    Ok(entries.0)
}

pub fn ingest_annotations(path: impl AsRef<Path>, dataset_id: &str) -> Result<(AnnotationSet, Vec<Warning>)> {
    read_annotations(open(path.as_ref())?, dataset_id)
}

/// Parses `{"<image_id>": ["<concept>", ...]}`. A repeated key keeps its last
/// value and yields a [`Warning::DuplicateImageKey`].
pub fn read_annotations<R: Read>(reader: R, dataset_id: &str) -> Result<(AnnotationSet, Vec<Warning>)> {
    let entries: Vec<(String, Vec<String>)> = parse_entries(reader)?;
    let mut set = AnnotationSet::new(dataset_id);
    let mut warnings = Vec::new();
    for (image_id, concepts) in entries {
        if set.entries.contains_key(&image_id) {
            warnings.push(Warning::DuplicateImageKey {
                image_id: image_id.clone(),
            });
        }
        set.insert(image_id, concepts);
    }
    Ok((set, warnings))
}

pub fn ingest_assignments(path: impl AsRef<Path>) -> Result<AssignmentTable> {
    read_assignments(open(path.as_ref())?)
}

/// Parses `{"<concept>": [<index>, ...]}`. A concept with several ensembles
/// uses an array of arrays: `{"pillow": [[3], [50], [3, 50]]}`.
pub fn read_assignments<R: Read>(reader: R) -> Result<AssignmentTable> {
    let entries: Vec<(String, Value)> = parse_entries(reader)?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (concept, value) in entries {
        if !seen.insert(concept.clone()) {
            return Err(Error::DuplicateAssignment { concept });
        }
        let items = match &value {
            Value::Array(items) => items,
            other => {
                return Err(Error::Json(format!(
                    "concept {concept:?}: expected an array of neuron indices, found {other}"
                )))
            }
        };
        if items.is_empty() {
            return Err(Error::EmptyEnsemble { concept });
        }
        if items.iter().all(Value::is_array) {
            for inner in items {
                let inner = inner.as_array().map(Vec::as_slice).unwrap_or_default();
                out.push(ConceptAssignment::new(concept.clone(), ensemble_from(&concept, inner)?));
            }
        } else {
            out.push(ConceptAssignment::new(concept.clone(), ensemble_from(&concept, items)?));
        }
    }
    AssignmentTable::new(out)
}

fn ensemble_from(concept: &str, items: &[Value]) -> Result<Ensemble> {
    let neurons = items
        .iter()
        .map(|v| {
            v.as_u64()
                .and_then(|i| usize::try_from(i).ok())
                .map(NeuronId)
                .ok_or_else(|| Error::InvalidNeuronIndex {
                    concept: concept.to_owned(),
                    value: v.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(neurons).ok_or_else(|| Error::EmptyEnsemble {
        concept: concept.to_owned(),
    })
}

pub fn ingest_gallery(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    serde_json::from_reader(open(path.as_ref())?).map_err(|e| Error::Json(e.to_string()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub label: Option<String>,
    pub x: f64,
    pub y: f64,
}

pub fn ingest_pairs(path: impl AsRef<Path>) -> Result<Vec<LabeledPair>> {
    read_pairs(open(path.as_ref())?)
}

/// Paired values, one pair per row: `x,y` or `label,x,y`. A first row whose
/// numeric columns do not parse is treated as a header.
pub fn read_pairs<R: Read>(reader: R) -> Result<Vec<LabeledPair>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    let mut width = None;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if !(2..=3).contains(&record.len()) {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected 2 or 3 columns, found {}", record.len()),
            });
        }
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(Error::MalformedRow {
                line,
                message: "inconsistent column count".into(),
            });
        }
        let k = record.len() - 2;
        let parse = |s: &str| s.parse::<f64>().ok();
        match (parse(&record[k]), parse(&record[k + 1])) {
            (Some(x), Some(y)) => {
                for (column, value) in [(k, x), (k + 1, y)] {
                    if !value.is_finite() {
                        return Err(Error::NonFinite {
                            line,
                            column: (column + 1).to_string(),
                            value: record[column].to_owned(),
                        });
                    }
                }
                out.push(LabeledPair {
                    label: (k == 1).then(|| record[0].to_owned()),
                    x,
                    y,
                });
            }
            _ if out.is_empty() && i == 0 => {}
            _ => {
                return Err(Error::MalformedRow {
                    line,
                    message: format!("cannot parse pair {:?}", record.iter().collect::<Vec<_>>()),
                })
            }
        }
    }
    Ok(out)
}
