//! CSV / Markdown / JSON rendering of margin tables and statistics, and a
//! parser for the same CSV layouts so published tables can ship as fixtures.
//!
//! Percentages are kept at full precision until formatting; fixed-decimal
//! output rounds half-to-even on the exact binary value.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margin::{Detection, MarginRow, MarginTable, ThresholdPct};
use crate::model::{Ensemble, NeuronId};
use crate::stats::{ConfirmationReport, TestResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    /// concept, ensemble, TLA at θ = 0, Non-TLA per threshold.
    GoogleMargins,
    /// concept, then (dataset A, dataset B) Non-TLA per threshold.
    PairedDatasets,
    /// per-threshold blocks of (concept, A, B, MWU p) plus a Wilcoxon p.
    StatsEval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableLayout {
    pub kind: TableKind,
    pub decimals: usize,
}

impl TableLayout {
    pub fn new(kind: TableKind) -> Self {
        TableLayout { kind, decimals: 3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Md,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "md" | "markdown" => Ok(Format::Md),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (expected csv, md or json)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginLine {
    pub concept: String,
    pub ensemble: Ensemble,
    pub tla_pct: f64,
    pub non_tla_pct: Vec<ThresholdPct>,
}

impl From<&MarginRow> for MarginLine {
    fn from(r: &MarginRow) -> Self {
        MarginLine {
            concept: r.concept.clone(),
            ensemble: r.ensemble.clone(),
            tla_pct: r.tla_pct,
            non_tla_pct: r.non_tla_pct.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedPct {
    pub theta: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedLine {
    pub concept: String,
    pub values: Vec<PairedPct>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsLine {
    pub theta: f64,
    pub concept: String,
    pub a_pct: f64,
    pub b_pct: f64,
    pub p_value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonLine {
    pub theta: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureTable {
    GoogleMargins {
        rows: Vec<MarginLine>,
    },
    PairedDatasets {
        labels: (String, String),
        rows: Vec<PairedLine>,
    },
    StatsEval {
        labels: (String, String),
        rows: Vec<StatsLine>,
        wilcoxon: Vec<WilcoxonLine>,
    },
}

impl FixtureTable {
    pub fn kind(&self) -> TableKind {
        match self {
            FixtureTable::GoogleMargins { .. } => TableKind::GoogleMargins,
            FixtureTable::PairedDatasets { .. } => TableKind::PairedDatasets,
            FixtureTable::StatsEval { .. } => TableKind::StatsEval,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FixtureTable::GoogleMargins { rows } => rows.len(),
            FixtureTable::PairedDatasets { rows, .. } => rows.len(),
            FixtureTable::StatsEval { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pairs two datasets' margin tables by (concept, ensemble), keeping A's order.
    pub fn paired(a: &MarginTable, b: &MarginTable, labels: (String, String)) -> Self {
        let rows = a
            .rows
            .iter()
            .filter_map(|ra| {
                let rb = b.row(&ra.concept, &ra.ensemble)?;
                Some(PairedLine {
                    concept: ra.concept.clone(),
                    values: ra
                        .non_tla_pct
                        .iter()
                        .zip(&rb.non_tla_pct)
                        .map(|(x, y)| PairedPct {
                            theta: x.theta,
                            a: x.pct,
                            b: y.pct,
                        })
                        .collect(),
                })
            })
            .collect();
        FixtureTable::PairedDatasets { labels, rows }
    }

    /// Stats layout for the confirmed concepts of a report.
    pub fn stats(report: &ConfirmationReport) -> Self {
        let mut rows = Vec::new();
        let mut wilcoxon = Vec::new();
        for block in &report.wilcoxon {
            for pair in &block.pairs {
                let p_value = report
                    .concepts
                    .iter()
                    .find(|c| c.concept == pair.concept && c.ensemble == pair.ensemble)
                    .and_then(|c| c.mwu.as_ref())
                    .map_or(f64::NAN, |m| m.p_value);
                rows.push(StatsLine {
                    theta: block.theta,
                    concept: pair.concept.clone(),
                    a_pct: pair.a_pct,
                    b_pct: pair.b_pct,
                    p_value,
                });
            }
            if let Some(r) = &block.result {
                wilcoxon.push(WilcoxonLine {
                    theta: block.theta,
                    p_value: r.p_value,
                });
            }
        }
        FixtureTable::StatsEval {
            labels: (report.dataset_a.clone(), report.dataset_b.clone()),
            rows,
            wilcoxon,
        }
    }
}

/// `0.2` → `20`, `0.05` → `5`, `0.125` → `12.5`.
fn threshold_label(theta: f64) -> String {
    let s = format!("{:.6}", theta * 100.0);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".to_owned()
    } else {
        s.to_owned()
    }
}

fn parse_threshold_label(label: &str, line: u64) -> Result<f64> {
    label
        .parse::<f64>()
        .map(|pct| pct / 100.0)
        .map_err(|_| Error::FixtureParse {
            line,
            message: format!("bad threshold label {label:?}"),
        })
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.trim() != s {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn md_text(s: &str) -> String {
    s.replace('|', "\\|")
}

fn fixed(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn p_text(p: f64) -> String {
    format!("{p:e}")
}

fn thresholds_of(table: &FixtureTable) -> Vec<f64> {
    match table {
        FixtureTable::GoogleMargins { rows } => rows
            .first()
            .map(|r| r.non_tla_pct.iter().map(|t| t.theta).collect())
            .unwrap_or_default(),
        FixtureTable::PairedDatasets { rows, .. } => rows
            .first()
            .map(|r| r.values.iter().map(|t| t.theta).collect())
            .unwrap_or_default(),
        FixtureTable::StatsEval { .. } => Vec::new(),
    }
}

fn table_header(table: &FixtureTable, thresholds: &[f64]) -> Vec<String> {
    match table {
        FixtureTable::GoogleMargins { .. } => {
            let mut h = vec!["concept".to_owned(), "neuron".to_owned(), "targ_gt0".to_owned()];
            h.extend(thresholds.iter().map(|&t| format!("non_t_gt{}", threshold_label(t))));
            h
        }
        FixtureTable::PairedDatasets { labels, .. } => {
            let mut h = vec!["concept".to_owned()];
            for &t in thresholds {
                let l = threshold_label(t);
                h.push(format!("{}_gt{l}", labels.0));
                h.push(format!("{}_gt{l}", labels.1));
            }
            h
        }
        FixtureTable::StatsEval { labels, .. } => vec![
            "kind".to_owned(),
            "theta".to_owned(),
            "concept".to_owned(),
            labels.0.clone(),
            labels.1.clone(),
            "p_value".to_owned(),
        ],
    }
}

/// Cells for each record; CSV and Markdown differ only in quoting.
fn table_cells(table: &FixtureTable, decimals: usize, csv: bool) -> Vec<Vec<String>> {
    let quote = |s: &str| if csv { csv_text(s) } else { md_text(s) };
    match table {
        FixtureTable::GoogleMargins { rows } => rows
            .iter()
            .map(|r| {
                let mut cells = vec![
                    quote(&r.concept),
                    // Ensembles are always quoted in CSV: they are comma lists.
                    if csv {
                        format!("\"{}\"", r.ensemble)
                    } else {
                        r.ensemble.to_string()
                    },
                    fixed(r.tla_pct, decimals),
                ];
                cells.extend(r.non_tla_pct.iter().map(|t| fixed(t.pct, decimals)));
                cells
            })
            .collect(),
        FixtureTable::PairedDatasets { rows, .. } => rows
            .iter()
            .map(|r| {
                let mut cells = vec![quote(&r.concept)];
                for v in &r.values {
                    cells.push(fixed(v.a, decimals));
                    cells.push(fixed(v.b, decimals));
                }
                cells
            })
            .collect(),
        FixtureTable::StatsEval { rows, wilcoxon, .. } => {
            let mut out = Vec::new();
            let mut thetas: Vec<f64> = rows.iter().map(|r| r.theta).collect();
            thetas.extend(wilcoxon.iter().map(|w| w.theta));
            thetas.sort_by(f64::total_cmp);
            thetas.dedup();
            for theta in thetas {
                for r in rows.iter().filter(|r| r.theta == theta) {
                    out.push(vec![
                        "mwu".to_owned(),
                        threshold_label(theta),
                        quote(&r.concept),
                        fixed(r.a_pct, decimals),
                        fixed(r.b_pct, decimals),
                        p_text(r.p_value),
                    ]);
                }
                for w in wilcoxon.iter().filter(|w| w.theta == theta) {
                    out.push(vec![
                        "wilcoxon".to_owned(),
                        threshold_label(theta),
                        String::new(),
                        String::new(),
                        String::new(),
                        p_text(w.p_value),
                    ]);
                }
            }
            out
        }
    }
}

pub fn render_table(table: &FixtureTable, decimals: usize, format: Format) -> String {
    render_with_thresholds(table, &thresholds_of(table), decimals, format)
}

fn render_with_thresholds(table: &FixtureTable, thresholds: &[f64], decimals: usize, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = match table {
                FixtureTable::GoogleMargins { rows } => serde_json::to_string_pretty(rows),
                _ => serde_json::to_string_pretty(table),
            }
            .expect("tables serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut out = table_header(table, thresholds).join(",");
            out.push('\n');
            for cells in table_cells(table, decimals, true) {
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out
        }
        Format::Md => {
            let header = table_header(table, thresholds);
            let mut out = format!("| {} |\n", header.join(" | "));
            out.push('|');
            for (i, _) in header.iter().enumerate() {
                out.push_str(if i < 2 && table.kind() != TableKind::StatsEval {
                    " :--- |"
                } else {
                    " ---: |"
                });
            }
            out.push('\n');
            for cells in table_cells(table, decimals, false) {
                let _ = writeln!(out, "| {} |", cells.join(" | "));
            }
            out
        }
    }
}

/// CSV / Markdown use the fixed-decimal table layout; JSON is the row array
/// at full precision, with per-row image counts.
pub fn render_margin_table(table: &MarginTable, layout: TableLayout, format: Format) -> String {
    if format == Format::Json {
        let mut s = serde_json::to_string_pretty(&table.rows).expect("rows serialize");
        s.push('\n');
        return s;
    }
    let fixture = FixtureTable::GoogleMargins {
        rows: table.rows.iter().map(MarginLine::from).collect(),
    };
    render_with_thresholds(&fixture, table.thresholds.fractions(), layout.decimals, format)
}

fn number(field: &str, line: u64, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::FixtureParse {
            line,
            message: format!("{what}: {field:?} is not a number"),
        })
}

fn parse_ensemble(field: &str, line: u64) -> Result<Ensemble> {
    let neurons = field
        .split(',')
        .map(|s| {
            s.trim().parse::<usize>().map(NeuronId).map_err(|_| Error::FixtureParse {
                line,
                message: format!("bad neuron list {field:?}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(neurons).ok_or_else(|| Error::FixtureParse {
        line,
        message: "empty neuron list".into(),
    })
}

/// Parses the CSV form of a layout back into typed rows.
pub fn parse_fixture_table(text: &str, layout: TableLayout) -> Result<FixtureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::FixtureParse {
            line: 1,
            message: e.to_string(),
        })?,
        None => {
            return Err(Error::FixtureParse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let header: Vec<String> = header.iter().map(|s| s.trim().to_owned()).collect();
    let bad_header = |message: String| Error::FixtureParse { line: 1, message };

    let mut body = Vec::new();
    for record in records {
        let record = record.map_err(|e| Error::FixtureParse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != header.len() {
            return Err(Error::FixtureParse {
                line,
                message: format!("expected {} columns, found {}", header.len(), record.len()),
            });
        }
        body.push((line, record));
    }

    match layout.kind {
        TableKind::GoogleMargins => {
            if header.len() < 3 || header[0] != "concept" || header[1] != "neuron" || header[2] != "targ_gt0" {
                return Err(bad_header(format!("unexpected header {header:?}")));
            }
            let thetas = header[3..]
                .iter()
                .map(|h| {
                    let label = h
                        .strip_prefix("non_t_gt")
                        .ok_or_else(|| bad_header(format!("unexpected column {h:?}")))?;
                    parse_threshold_label(label, 1)
                })
                .collect::<Result<Vec<_>>>()?;
            let rows = body
                .into_iter()
                .map(|(line, r)| {
                    Ok(MarginLine {
                        concept: r[0].to_owned(),
                        ensemble: parse_ensemble(&r[1], line)?,
                        tla_pct: number(&r[2], line, "targ_gt0")?,
                        non_tla_pct: thetas
                            .iter()
                            .enumerate()
                            .map(|(i, &theta)| {
                                Ok(ThresholdPct {
                                    theta,
                                    pct: number(&r[3 + i], line, &header[3 + i])?,
                                })
                            })
                            .collect::<Result<Vec<_>>>()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FixtureTable::GoogleMargins { rows })
        }
        TableKind::PairedDatasets => {
            if header.is_empty() || header[0] != "concept" || !(header.len() - 1).is_multiple_of(2) {
                return Err(bad_header(format!("unexpected header {header:?}")));
            }
            let split = |h: &str| -> Result<(String, f64)> {
                let (label, t) = h
                    .rsplit_once("_gt")
                    .ok_or_else(|| bad_header(format!("unexpected column {h:?}")))?;
                Ok((label.to_owned(), parse_threshold_label(t, 1)?))
            };
            let mut labels = (String::new(), String::new());
            let mut thetas = Vec::new();
            for pair in header[1..].chunks(2) {
                let (la, ta) = split(&pair[0])?;
                let (lb, tb) = split(&pair[1])?;
                if ta != tb {
                    return Err(bad_header(format!("columns {pair:?} disagree on threshold")));
                }
                labels = (la, lb);
                thetas.push(ta);
            }
            let rows = body
                .into_iter()
                .map(|(line, r)| {
                    Ok(PairedLine {
                        concept: r[0].to_owned(),
                        values: thetas
                            .iter()
                            .enumerate()
                            .map(|(i, &theta)| {
                                Ok(PairedPct {
                                    theta,
                                    a: number(&r[1 + 2 * i], line, &header[1 + 2 * i])?,
                                    b: number(&r[2 + 2 * i], line, &header[2 + 2 * i])?,
                                })
                            })
                            .collect::<Result<Vec<_>>>()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FixtureTable::PairedDatasets { labels, rows })
        }
        TableKind::StatsEval => {
            if header.len() != 6 || header[0] != "kind" || header[1] != "theta" || header[2] != "concept" || header[5] != "p_value" {
                return Err(bad_header(format!("unexpected header {header:?}")));
            }
            let labels = (header[3].clone(), header[4].clone());
            let mut rows = Vec::new();
            let mut wilcoxon = Vec::new();
            for (line, r) in body {
                let theta = parse_threshold_label(r[1].trim(), line)?;
                let p_value = number(&r[5], line, "p_value")?;
                match r[0].trim() {
                    "mwu" => rows.push(StatsLine {
                        theta,
                        concept: r[2].to_owned(),
                        a_pct: number(&r[3], line, &labels.0)?,
                        b_pct: number(&r[4], line, &labels.1)?,
                        p_value,
                    }),
                    "wilcoxon" => wilcoxon.push(WilcoxonLine { theta, p_value }),
                    other => {
                        return Err(Error::FixtureParse {
                            line,
                            message: format!("unknown row kind {other:?}"),
                        })
                    }
                }
            }
            Ok(FixtureTable::StatsEval { labels, rows, wilcoxon })
        }
    }
}

#[derive(Serialize)]
struct ChartEntry<'a> {
    concept: &'a str,
    ensemble: &'a Ensemble,
    activated: bool,
    error_margin_pct: Option<f64>,
    theta: f64,
}

/// Detections as a JSON array, lowest error margin first; detections without
/// a holdout margin go last.
pub fn chart_payload(detections: &[Detection]) -> String {
    let mut sorted: Vec<&Detection> = detections.iter().collect();
    sorted.sort_by(|a, b| {
        let key = |d: &Detection| d.error_margin_pct.unwrap_or(f64::INFINITY);
        key(a)
            .total_cmp(&key(b))
            .then_with(|| a.concept.cmp(&b.concept))
            .then_with(|| a.ensemble.cmp(&b.ensemble))
    });
    let entries: Vec<ChartEntry<'_>> = sorted
        .into_iter()
        .map(|d| ChartEntry {
            concept: &d.concept,
            ensemble: &d.ensemble,
            activated: d.activated,
            error_margin_pct: d.error_margin_pct,
            theta: d.theta,
        })
        .collect();
    serde_json::to_string(&entries).expect("detections serialize")
}

pub fn render_test_result(result: &TestResult, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(result).expect("results serialize");
            s.push('\n');
            s
        }
        Format::Csv => format!(
            "statistic,p_value,method,alternative\n{},{:e},{},{}\n",
            result.statistic, result.p_value, result.method, result.alternative
        ),
        Format::Md => {
            let n = match result.n {
                crate::stats::SampleSize::Independent { n1, n2 } => format!("n1 = {n1}, n2 = {n2}"),
                crate::stats::SampleSize::Paired { n_nonzero } => format!("n = {n_nonzero}"),
            };
            format!(
                "| statistic | p-value | method | alternative | n |\n| ---: | ---: | :--- | :--- | :--- |\n| {} | {} | {} | {} | {} |\n",
                result.statistic,
                p_text(result.p_value),
                result.method,
                result.alternative,
                n
            )
        }
    }
}

pub fn render_confirmation(report: &ConfirmationReport, format: Format) -> String {
    if format == Format::Json {
        let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
        s.push('\n');
        return s;
    }
    if format == Format::Csv {
        return render_table(&FixtureTable::stats(report), 3, Format::Csv);
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "## Concept confirmation: {} vs {} (alpha = {})\n",
        report.dataset_a, report.dataset_b, report.alpha
    );
    let _ = writeln!(out, "MWU sample: {}\n", report.mwu_sample);
    out.push_str("| concept | neuron | U | p-value | method | confirmed |\n| :--- | :--- | ---: | ---: | :--- | :---: |\n");
    for c in &report.concepts {
        match &c.mwu {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} |",
                    md_text(&c.concept),
                    c.ensemble,
                    m.statistic,
                    p_text(m.p_value),
                    m.method,
                    if c.confirmed { "yes" } else { "no" }
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "| {} | {} | | | {} | no |",
                    md_text(&c.concept),
                    c.ensemble,
                    c.error.as_deref().unwrap_or("")
                );
            }
        }
    }
    out.push_str("\n## Wilcoxon signed-rank over confirmed concepts\n\n");
    out.push_str("| threshold | pairs | W | p-value | method | alternative |\n| ---: | ---: | ---: | ---: | :--- | :--- |\n");
    for w in &report.wilcoxon {
        match &w.result {
            Some(r) => {
                let _ = writeln!(
                    out,
                    "| > {}% | {} | {} | {} | {} | {} |",
                    threshold_label(w.theta),
                    w.pairs.len(),
                    r.statistic,
                    p_text(r.p_value),
                    r.method,
                    r.alternative
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "| > {}% | {} | | | {} | |",
                    threshold_label(w.theta),
                    w.pairs.len(),
                    w.note.as_deref().unwrap_or("skipped")
                );
            }
        }
    }
    if !report.warnings.is_empty() {
        out.push_str("\nWarnings:\n");
        for w in &report.warnings {
            let _ = writeln!(out, "- {w}");
        }
    }
    out
}
