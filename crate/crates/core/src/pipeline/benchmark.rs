use std::collections::BTreeSet;
use std::path::Path;

use super::manifest::DatasetManifest;
use super::{read_file, write_file, PipelineError};
use crate::corruption::CorruptionKind;
use crate::metrics::{aggregate, ingest_predictions, render_report, MetricsReport, PredictionRecord, ReportFormat};

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub report: MetricsReport,
    /// Manifest cells with no prediction at all.
    pub missing_cells: Vec<(CorruptionKind, u8)>,
    pub clean_missing: bool,
    pub records: usize,
}

/// Checks `records` against the manifest and returns the uncovered cells.
pub fn check_coverage(
    records: &[PredictionRecord],
    manifest: &DatasetManifest,
) -> Result<(Vec<(CorruptionKind, u8)>, bool), PipelineError> {
    let mut orphans = Vec::new();
    let mut seen = BTreeSet::new();
    let mut clean = false;
    for r in records {
        let Some(sample) = manifest.sample(&r.sample_id) else {
            orphans.push(r.sample_id.clone());
            continue;
        };
        match r.corruption {
            None => clean = true,
            Some(k) => {
                if sample.cell(k, r.severity).is_none() {
                    return Err(PipelineError::Manifest(format!(
                        "prediction for {} {} severity {} has no generated cloud",
                        r.sample_id, k, r.severity
                    )));
                }
                seen.insert((k.ordinal(), r.severity));
            }
        }
    }
    if !orphans.is_empty() {
        orphans.sort();
        orphans.dedup();
        let shown: Vec<&str> = orphans.iter().take(5).map(String::as_str).collect();
        return Err(PipelineError::Manifest(format!(
            "{} sample ids not in the manifest: {}",
            orphans.len(),
            shown.join(", ")
        )));
    }
    let missing = manifest
        .kinds
        .iter()
        .flat_map(|&k| manifest.severities.iter().map(move |&s| (k, s)))
        .filter(|(k, s)| !seen.contains(&(k.ordinal(), *s)))
        .collect();
    Ok((missing, !clean))
}

/// Ingests predictions, cross-checks them with the manifest, and writes the report.
pub fn run_benchmark(
    predictions: &Path,
    manifest: &Path,
    report_path: Option<&Path>,
    format: ReportFormat,
) -> Result<BenchmarkOutcome, PipelineError> {
    let bytes = read_file(predictions)?;
    let records = ingest_predictions(bytes.as_slice())?;
    let (manifest, _) = DatasetManifest::load(manifest)?;
    let (missing_cells, clean_missing) = check_coverage(&records, &manifest)?;
    let report = aggregate(&records);
    if let Some(path) = report_path {
        write_file(path, render_report(&report, format).as_bytes())?;
    }
    Ok(BenchmarkOutcome {
        report,
        missing_cells,
        clean_missing,
        records: records.len(),
    })
}
