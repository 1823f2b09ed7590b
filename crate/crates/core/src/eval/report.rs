use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AblationRow, BranchScores, EvalError, HumanRow};
use crate::corpus::Branch;
use crate::debias::Histogram;
use crate::scorer::WeightScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

/// Everything one evaluation run produced. Metric values are fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub benchmark: String,
    pub provider: String,
    pub model: String,
    pub prompt: String,
    pub weights: WeightScheme,
    pub seed: u64,
    /// Branches the benchmark declares; each must appear in `branches`.
    pub declared: Vec<Branch>,
    pub branches: BTreeMap<Branch, BranchScores>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ablation: BTreeMap<Branch, AblationRow>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub histograms: BTreeMap<Branch, Histogram>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub human: Vec<HumanRow>,
}

impl EvalReport {
    pub fn missing_branches(&self) -> Vec<Branch> {
        self.declared
            .iter()
            .filter(|b| !self.branches.contains_key(b))
            .copied()
            .collect()
    }
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|")
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_else(|| "-".into())
}

fn array<T: Serialize>(values: &[T]) -> String {
    serde_json::to_string(values).expect("numbers serialize")
}

fn markdown(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Evaluation report: {}\n", r.benchmark);
    let _ = writeln!(out, "| Field | Value |\n|---|---|");
    for (k, v) in [
        ("Provider", r.provider.clone()),
        ("Model", r.model.clone()),
        ("Prompt", r.prompt.clone()),
        ("Weights", r.weights.to_string()),
        ("Seed", r.seed.to_string()),
    ] {
        let _ = writeln!(out, "| {k} | {} |", cell(&v));
    }

    let columns: Vec<Branch> = Branch::ALL
        .into_iter()
        .filter(|b| r.branches.contains_key(b))
        .collect();
    out.push_str("\n## Results\n\n| Model |");
    for b in &columns {
        let _ = write!(out, " {b} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(columns.len()));
    let _ = write!(out, "\n| {} |", cell(&r.model));
    for b in &columns {
        let _ = write!(out, " {} |", pct(r.branches[b].value));
    }
    out.push('\n');

    out.push_str("\n## Branch details\n\n| Branch | Items | Value | Recall@1 | Text | Image | Group | Sources |\n|---|---:|---:|---:|---:|---:|---:|---|\n");
    for b in &columns {
        let s = &r.branches[b];
        let w = s.winoground;
        let sources: Vec<String> = s
            .per_source
            .iter()
            .map(|(k, v)| format!("{}: {}", cell(k), pct(*v)))
            .collect();
        let _ = writeln!(
            out,
            "| {b} | {} | {} | {} | {} | {} | {} | {} |",
            s.items,
            pct(s.value),
            opt(s.recall_at_1, pct),
            opt(w.map(|w| w.text_score), pct),
            opt(w.map(|w| w.image_score), pct),
            opt(w.map(|w| w.group_score), pct),
            if sources.is_empty() {
                "-".to_string()
            } else {
                sources.join(", ")
            },
        );
    }

    if !r.ablation.is_empty() {
        out.push_str("\n## Noise ablation\n\n| Branch | Items | Original | Noise | Delta |\n|---|---:|---:|---:|---:|\n");
        for (b, row) in &r.ablation {
            let _ = writeln!(
                out,
                "| {b} | {} | {} | {} | {} |",
                row.items,
                pct(row.original),
                pct(row.noise),
                pct(row.delta)
            );
        }
    }

    if !r.human.is_empty() {
        out.push_str(
            "\n## Human evaluation\n\n| Branch | origin ref. | SADE ref. |\n|---|---:|---:|\n",
        );
        let two = |v: f64| format!("{v:.2}");
        for row in &r.human {
            let _ = writeln!(
                out,
                "| {} | {} | {} |",
                cell(&row.branch),
                opt(row.origin, two),
                opt(row.sade, two)
            );
        }
    }

    if !r.histograms.is_empty() {
        out.push_str("\n## Bias histograms\n\n| Branch | Edges | Counts |\n|---|---|---|\n");
        for (b, h) in &r.histograms {
            let _ = writeln!(out, "| {b} | {} | {} |", array(&h.edges), array(&h.counts));
        }
    }
    out
}

/// Renders the report. Fails when a declared branch has no results.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Result<String, EvalError> {
    let missing = report.missing_branches();
    if !missing.is_empty() {
        return Err(EvalError::IncompleteResults(missing));
    }
    Ok(match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => markdown(report),
    })
}
