use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricsReport;
use crate::corruption::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "markdown" | "md" | "markdown-table" => Ok(Self::Markdown),
            other => Err(format!("unknown report format {other:?} (json | markdown)")),
        }
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |r| format!("{:.1}", 100.0 * r))
}

fn group_label(c: Category) -> &'static str {
    match c {
        Category::Density => "Density",
        Category::Noise => "Noise",
        Category::Transformation => "Transformation",
    }
}

fn table(out: &mut String, report: &MetricsReport, title: &str, clean: Option<f64>, cells: &[Vec<Option<f64>>], kind: &[Option<f64>], cor: Option<f64>) {
    let _ = writeln!(out, "### {title}\n");
    let mut groups = vec![String::new(), String::new()];
    let mut prev = None;
    for k in &report.kinds {
        let cat = k.category();
        groups.push(if prev == Some(cat) { String::new() } else { group_label(cat).to_string() });
        prev = Some(cat);
    }
    groups.push(String::new());
    let _ = writeln!(out, "| {} |", groups.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(groups.len()));
    let mut names = vec!["**Severity**".to_string(), "**Clean**".to_string()];
    names.extend(report.kinds.iter().map(|k| format!("**{}**", k.name())));
    names.push("**ER_cor**".into());
    let _ = writeln!(out, "| {} |", names.join(" | "));
    for (s, row) in cells.iter().enumerate() {
        let mut line = vec![(s + 1).to_string(), "-".to_string()];
        line.extend(row.iter().map(|v| pct(*v)));
        let present: Vec<f64> = row.iter().flatten().copied().collect();
        line.push(pct((!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)));
        let _ = writeln!(out, "| {} |", line.join(" | "));
    }
    let mut line = vec!["mean".to_string(), pct(clean)];
    line.extend(kind.iter().map(|v| pct(*v)));
    line.push(pct(cor));
    let _ = writeln!(out, "| {} |\n", line.join(" | "));
}

/// Serializes a report. Markdown rates are percentages; `-` marks absent cells.
pub fn render_report(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "## Error rates (%)\n");
            let _ = writeln!(
                out,
                "Clean samples: {}. Corruptions present: {} of {}.\n",
                report.clean_count,
                report.kinds_present,
                report.kinds.len()
            );
            table(&mut out, report, "ER", report.er_clean, &report.er, &report.er_kind, report.er_cor);
            table(&mut out, report, "mER", report.mer_clean, &report.mer, &report.mer_kind, report.mer_cor);
            out
        }
    }
}
