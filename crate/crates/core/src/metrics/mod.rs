//! Error-rate metrics over prediction records.
//!
//! Every count is an integer confusion matrix per (corruption, severity)
//! cell; rates are produced once, at report time.

mod render;

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use render::{render_report, ReportFormat};

use crate::corruption::{Category, CorruptionKind};

pub const REPORT_VERSION: u32 = 1;
pub const CLEAN: &str = "clean";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("row {row}: {reason}")]
    Row { row: u64, reason: String },
    #[error("row {row}: duplicate record for sample {sample_id:?}, {corruption}, severity {severity}")]
    Duplicate {
        row: u64,
        sample_id: String,
        corruption: String,
        severity: u8,
    },
    #[error("header must be sample_id,corruption,severity,true_label,pred_label[,logits], got {0:?}")]
    Header(String),
    #[error("no records in scope")]
    Empty,
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("csv: {0}")]
    Csv(String),
}

/// One prediction. `corruption == None` marks a clean sample with severity 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub corruption: Option<CorruptionKind>,
    pub severity: u8,
    pub true_label: usize,
    pub pred_label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
}

impl PredictionRecord {
    pub fn clean(sample_id: impl Into<String>, true_label: usize, pred_label: usize) -> Self {
        Self {
            sample_id: sample_id.into(),
            corruption: None,
            severity: 0,
            true_label,
            pred_label,
            logits: None,
        }
    }

    pub fn corrupted(
        sample_id: impl Into<String>,
        kind: CorruptionKind,
        severity: u8,
        true_label: usize,
        pred_label: usize,
    ) -> Self {
        Self {
            sample_id: sample_id.into(),
            corruption: Some(kind),
            severity,
            true_label,
            pred_label,
            logits: None,
        }
    }

    pub fn is_wrong(&self) -> bool {
        self.true_label != self.pred_label
    }

    pub fn corruption_name(&self) -> &'static str {
        self.corruption.map_or(CLEAN, CorruptionKind::name)
    }

    /// Checks the severity / corruption pairing.
    pub fn validate(&self) -> Result<(), String> {
        match (self.corruption, self.severity) {
            (None, 0) => Ok(()),
            (None, s) => Err(format!("clean records must have severity 0, got {s}")),
            (Some(k), 0) => Err(format!("severity 0 is reserved for clean records, got {k}")),
            (Some(_), 1..=5) => Ok(()),
            (Some(_), s) => Err(format!("severity must be in 1..=5, got {s}")),
        }
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    sample_id: String,
    corruption: String,
    severity: String,
    true_label: String,
    pred_label: String,
    #[serde(default)]
    logits: Option<String>,
}

const HEADER: [&str; 5] = ["sample_id", "corruption", "severity", "true_label", "pred_label"];

/// Reads and validates a prediction CSV.
///
/// Row numbers in errors are file line numbers (the header is line 1). An
/// optional sixth column `logits` holds space-separated values.
pub fn ingest_predictions<R: Read>(reader: R) -> Result<Vec<PredictionRecord>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| MetricsError::Csv(e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let ok = names.len() >= 5 && names[..5] == HEADER && (names.len() == 5 || (names.len() == 6 && names[5] == "logits"));
    if !ok {
        return Err(MetricsError::Header(names.join(",")));
    }
    let mut records = Vec::new();
    let mut seen: HashSet<(String, &'static str, u8)> = HashSet::new();
    for result in rdr.records() {
        let record = result.map_err(|e| MetricsError::Row {
            row: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let row = record.position().map_or(records.len() as u64 + 2, |p| p.line());
        let raw: CsvRow = record
            .deserialize(Some(&headers))
            .map_err(|e| MetricsError::Row { row, reason: e.to_string() })?;
        let fail = |reason: String| MetricsError::Row { row, reason };
        let corruption = if raw.corruption.eq_ignore_ascii_case(CLEAN) {
            None
        } else {
            Some(
                raw.corruption
                    .parse::<CorruptionKind>()
                    .map_err(|_| fail(format!("unknown corruption {:?}", raw.corruption)))?,
            )
        };
        let severity: u8 = raw
            .severity
            .parse()
            .map_err(|_| fail(format!("invalid severity {:?}", raw.severity)))?;
        let true_label: usize = raw
            .true_label
            .parse()
            .map_err(|_| fail(format!("invalid true_label {:?}", raw.true_label)))?;
        let pred_label: usize = raw
            .pred_label
            .parse()
            .map_err(|_| fail(format!("invalid pred_label {:?}", raw.pred_label)))?;
        let logits = match raw.logits.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(
                s.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| fail(format!("invalid logit {t:?}"))))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        let rec = PredictionRecord {
            sample_id: raw.sample_id,
            corruption,
            severity,
            true_label,
            pred_label,
            logits,
        };
        rec.validate().map_err(fail)?;
        if !seen.insert((rec.sample_id.clone(), rec.corruption_name(), rec.severity)) {
            return Err(MetricsError::Duplicate {
                row,
                corruption: rec.corruption_name().to_string(),
                sample_id: rec.sample_id,
                severity: rec.severity,
            });
        }
        records.push(rec);
    }
    Ok(records)
}

/// Writes records in the ingest schema.
pub fn write_predictions(records: &[PredictionRecord]) -> String {
    let with_logits = records.iter().any(|r| r.logits.is_some());
    let mut out = HEADER.join(",");
    if with_logits {
        out.push_str(",logits");
    }
    out.push('\n');
    for r in records {
        let id = if r.sample_id.contains([',', '"', '\n']) {
            format!("\"{}\"", r.sample_id.replace('"', "\"\""))
        } else {
            r.sample_id.clone()
        };
        out.push_str(&format!(
            "{id},{},{},{},{}",
            r.corruption_name(),
            r.severity,
            r.true_label,
            r.pred_label
        ));
        if with_logits {
            out.push(',');
            if let Some(l) = &r.logits {
                let parts: Vec<String> = l.iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&parts.join(" "));
            }
        }
        out.push('\n');
    }
    out
}

/// Fraction of wrong predictions.
pub fn error_rate(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let wrong = records.iter().filter(|r| r.is_wrong()).count();
    Ok(wrong as f64 / records.len() as f64)
}

/// Unweighted mean of per-class error rates over the classes that occur.
pub fn class_mean_error_rate(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    let classes = records.iter().map(|r| r.true_label.max(r.pred_label) + 1).max().ok_or(MetricsError::Empty)?;
    let mut c = Counts::new(classes);
    for r in records {
        c.add(r.true_label, r.pred_label);
    }
    Ok(c.mer().expect("nonempty"))
}

/// Row-major `C x C` confusion counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    classes: usize,
    matrix: Vec<u64>,
}

impl Counts {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            matrix: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.matrix[truth * self.classes + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        let needed = truth.max(pred) + 1;
        if needed > self.classes {
            self.grow(needed);
        }
        self.matrix[truth * self.classes + pred] += 1;
    }

    fn grow(&mut self, classes: usize) {
        let mut m = vec![0; classes * classes];
        for t in 0..self.classes {
            for p in 0..self.classes {
                m[t * classes + p] = self.get(t, p);
            }
        }
        self.classes = classes;
        self.matrix = m;
    }

    pub fn merge(&mut self, other: &Counts) {
        if other.classes > self.classes {
            self.grow(other.classes);
        }
        for t in 0..other.classes {
            for p in 0..other.classes {
                self.matrix[t * self.classes + p] += other.get(t, p);
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.matrix.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn wrong(&self) -> u64 {
        self.total() - self.correct()
    }

    pub fn class_total(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.get(c, p)).sum()
    }

    pub fn er(&self) -> Option<f64> {
        let t = self.total();
        (t > 0).then(|| self.wrong() as f64 / t as f64)
    }

    pub fn mer(&self) -> Option<f64> {
        let rates: Vec<f64> = (0..self.classes)
            .filter_map(|c| {
                let t = self.class_total(c);
                (t > 0).then(|| (t - self.get(c, c)) as f64 / t as f64)
            })
            .collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        (0..self.classes)
            .map(|t| (0..self.classes).map(|p| self.get(t, p)).collect())
            .collect()
    }
}

/// Integer tallies for the clean set and each (kind, severity) cell.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Tally {
    pub clean: Option<Counts>,
    pub cells: BTreeMap<(CorruptionKind, u8), Counts>,
}

impl Tally {
    pub fn add(&mut self, r: &PredictionRecord) {
        let classes = r.true_label.max(r.pred_label) + 1;
        let slot = match r.corruption {
            None => self.clean.get_or_insert_with(|| Counts::new(classes)),
            Some(k) => self.cells.entry((k, r.severity)).or_insert_with(|| Counts::new(classes)),
        };
        slot.add(r.true_label, r.pred_label);
    }

    pub fn merge(&mut self, other: &Tally) {
        if let Some(c) = &other.clean {
            match &mut self.clean {
                Some(mine) => mine.merge(c),
                None => self.clean = Some(c.clone()),
            }
        }
        for (key, c) in &other.cells {
            self.cells.entry(*key).or_insert_with(|| Counts::new(0)).merge(c);
        }
    }

    pub fn from_records(records: &[PredictionRecord]) -> Self {
        records
            .par_chunks(4096)
            .map(|chunk| {
                let mut t = Tally::default();
                for r in chunk {
                    t.add(r);
                }
                t
            })
            .reduce(Tally::default, |mut a, b| {
                a.merge(&b);
                a
            })
    }

    pub fn classes(&self) -> usize {
        self.clean
            .iter()
            .chain(self.cells.values())
            .map(Counts::classes)
            .max()
            .unwrap_or(0)
    }

    fn kind_counts(&self, kind: CorruptionKind) -> Counts {
        let mut c = Counts::new(self.classes());
        for ((k, _), v) in &self.cells {
            if *k == kind {
                c.merge(v);
            }
        }
        c
    }

    fn corrupted_counts(&self) -> Counts {
        let mut c = Counts::new(self.classes());
        for v in self.cells.values() {
            c.merge(v);
        }
        c
    }
}

/// Which records a confusion matrix covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    Clean,
    Corrupted,
    Kind(CorruptionKind),
    Cell(CorruptionKind, u8),
}

impl Scope {
    pub fn matches(&self, r: &PredictionRecord) -> bool {
        match *self {
            Scope::All => true,
            Scope::Clean => r.corruption.is_none(),
            Scope::Corrupted => r.corruption.is_some(),
            Scope::Kind(k) => r.corruption == Some(k),
            Scope::Cell(k, s) => r.corruption == Some(k) && r.severity == s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
    /// Rows divided by their sums; empty rows stay zero.
    pub normalized: Vec<Vec<f64>>,
}

impl Confusion {
    fn from_counts(c: &Counts) -> Self {
        let counts = c.rows();
        let normalized = counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter().map(|&v| if s == 0 { 0.0 } else { v as f64 / s as f64 }).collect()
            })
            .collect();
        Self { counts, normalized }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }
}

/// Confusion matrix over `classes` classes for the records in `scope`.
pub fn confusion(records: &[PredictionRecord], scope: Scope, classes: usize) -> Result<Confusion, MetricsError> {
    let mut c = Counts::new(classes);
    let mut any = false;
    for r in records.iter().filter(|r| scope.matches(r)) {
        for index in [r.true_label, r.pred_label] {
            if index >= classes {
                return Err(MetricsError::ClassOutOfRange { index, classes });
            }
        }
        c.add(r.true_label, r.pred_label);
        any = true;
    }
    if !any {
        return Err(MetricsError::Empty);
    }
    Ok(Confusion::from_counts(&c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopedConfusion {
    pub scope: String,
    pub confusion: Confusion,
}

/// Per-cell tables are indexed `[severity - 1][kind ordinal]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub report_version: u32,
    pub classes: usize,
    pub kinds: Vec<CorruptionKind>,
    pub clean_count: u64,
    pub er_clean: Option<f64>,
    pub mer_clean: Option<f64>,
    pub present: Vec<Vec<bool>>,
    pub counts: Vec<Vec<u64>>,
    pub wrong: Vec<Vec<u64>>,
    pub er: Vec<Vec<Option<f64>>>,
    pub mer: Vec<Vec<Option<f64>>>,
    /// Mean over the present severities of each kind.
    pub er_kind: Vec<Option<f64>>,
    pub mer_kind: Vec<Option<f64>>,
    /// Number of severities present per kind.
    pub kind_cells: Vec<usize>,
    /// Mean of the present `er_kind` values.
    pub er_cor: Option<f64>,
    pub mer_cor: Option<f64>,
    pub kinds_present: usize,
    pub sum_er_kind: Vec<Option<f64>>,
    pub sum_mer_kind: Vec<Option<f64>>,
    pub sum_er_cor: Option<f64>,
    pub sum_mer_cor: Option<f64>,
    /// Mean `er_kind` per category (density, noise, transformation).
    pub er_category: BTreeMap<String, Option<f64>>,
    pub confusion: Vec<ScopedConfusion>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn category_name(c: Category) -> &'static str {
    match c {
        Category::Density => "density",
        Category::Noise => "noise",
        Category::Transformation => "transformation",
    }
}

impl MetricsReport {
    pub fn from_tally(tally: &Tally) -> Self {
        let kinds = CorruptionKind::ALL.to_vec();
        let classes = tally.classes();
        let cell = |s: usize, k: CorruptionKind| tally.cells.get(&(k, s as u8 + 1));
        let grid = |f: &dyn Fn(&Counts) -> Option<f64>| -> Vec<Vec<Option<f64>>> {
            (0..5)
                .map(|s| kinds.iter().map(|&k| cell(s, k).and_then(f)).collect())
                .collect()
        };
        let er = grid(&|c| c.er());
        let mer = grid(&|c| c.mer());
        let present: Vec<Vec<bool>> = (0..5)
            .map(|s| kinds.iter().map(|&k| cell(s, k).is_some_and(|c| c.total() > 0)).collect())
            .collect();
        let counts = (0..5)
            .map(|s| kinds.iter().map(|&k| cell(s, k).map_or(0, Counts::total)).collect())
            .collect();
        let wrong = (0..5)
            .map(|s| kinds.iter().map(|&k| cell(s, k).map_or(0, Counts::wrong)).collect())
            .collect();
        let column = |table: &Vec<Vec<Option<f64>>>, k: usize| -> Vec<f64> { (0..5).filter_map(|s| table[s][k]).collect() };
        let er_kind: Vec<Option<f64>> = (0..kinds.len()).map(|k| mean(&column(&er, k))).collect();
        let mer_kind: Vec<Option<f64>> = (0..kinds.len()).map(|k| mean(&column(&mer, k))).collect();
        let sum_of = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>());
        let sum_er_kind: Vec<Option<f64>> = (0..kinds.len()).map(|k| sum_of(column(&er, k))).collect();
        let sum_mer_kind: Vec<Option<f64>> = (0..kinds.len()).map(|k| sum_of(column(&mer, k))).collect();
        let flat = |v: &Vec<Option<f64>>| -> Vec<f64> { v.iter().flatten().copied().collect() };
        let mut er_category = BTreeMap::new();
        for cat in [Category::Density, Category::Noise, Category::Transformation] {
            let vals: Vec<f64> = kinds
                .iter()
                .zip(&er_kind)
                .filter(|(k, _)| k.category() == cat)
                .filter_map(|(_, v)| *v)
                .collect();
            er_category.insert(category_name(cat).to_string(), mean(&vals));
        }
        let mut confusion = Vec::new();
        if let Some(c) = &tally.clean {
            let mut full = Counts::new(classes);
            full.merge(c);
            confusion.push(ScopedConfusion {
                scope: CLEAN.into(),
                confusion: Confusion::from_counts(&full),
            });
        }
        for &k in &kinds {
            let c = tally.kind_counts(k);
            if c.total() > 0 {
                confusion.push(ScopedConfusion {
                    scope: k.name().into(),
                    confusion: Confusion::from_counts(&c),
                });
            }
        }
        let corrupted = tally.corrupted_counts();
        if corrupted.total() > 0 {
            confusion.push(ScopedConfusion {
                scope: "corrupted".into(),
                confusion: Confusion::from_counts(&corrupted),
            });
        }
        Self {
            report_version: REPORT_VERSION,
            classes,
            clean_count: tally.clean.as_ref().map_or(0, Counts::total),
            er_clean: tally.clean.as_ref().and_then(Counts::er),
            mer_clean: tally.clean.as_ref().and_then(Counts::mer),
            kind_cells: (0..kinds.len()).map(|k| (0..5).filter(|&s| present[s][k]).count()).collect(),
            present,
            counts,
            wrong,
            er_cor: mean(&flat(&er_kind)),
            mer_cor: mean(&flat(&mer_kind)),
            kinds_present: er_kind.iter().flatten().count(),
            sum_er_cor: sum_of(flat(&er_kind)),
            sum_mer_cor: sum_of(flat(&mer_kind)),
            er,
            mer,
            er_kind,
            mer_kind,
            sum_er_kind,
            sum_mer_kind,
            er_category,
            confusion,
            kinds,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Full report over `records`.
pub fn aggregate(records: &[PredictionRecord]) -> MetricsReport {
    MetricsReport::from_tally(&Tally::from_records(records))
}
