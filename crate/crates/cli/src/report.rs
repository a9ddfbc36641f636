//! The evaluation report and its tabular views.

use rsvp_core::classifiers::LinearModel;
use rsvp_core::eval::{Anova, CandidateRow, Hyper, PipelineKind};
use serde::{Deserialize, Serialize};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub rate: f64,
    pub channels: Vec<String>,
    pub epochs: usize,
    pub targets: usize,
    pub standards: usize,
    pub dropped_at_edges: usize,
    pub rejected_targets: usize,
    pub rejected_standards: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub pipeline: PipelineKind,
    pub best_index: usize,
    pub best_hyper: Hyper,
    pub best_cv_auc: f64,
    pub test_auc: f64,
    pub candidates: Vec<CandidateRow>,
    pub model: LinearModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub name: String,
    pub preprocessing: PreprocessSummary,
    pub train_epochs: usize,
    pub test_epochs: usize,
    pub pipelines: Vec<PipelineResult>,
    /// Artifact files relative to the output directory.
    pub artifacts: Vec<String>,
}

/// One row of the summary table: test AUC per dataset and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub pipeline: PipelineKind,
    pub test_auc: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaEntry {
    /// Filter names; each group holds the per-dataset mean test AUC over
    /// that filter's classifiers.
    pub groups: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub result: Option<Anova>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub version: u32,
    pub seed: u64,
    pub config: crate::config::RunConfig,
    pub datasets: Vec<DatasetResult>,
    pub summary: Vec<SummaryRow>,
    pub anova: Vec<AnovaEntry>,
}

impl EvaluationReport {
    pub fn dataset_names(&self) -> Vec<&str> {
        self.datasets.iter().map(|d| d.name.as_str()).collect()
    }

    /// `results.csv`: one row per pipeline, one column per dataset, then the
    /// mean. Values are printed in shortest round-trip form.
    pub fn results_csv(&self) -> String {
        let mut out = String::from("pipeline");
        for name in self.dataset_names() {
            out.push(',');
            out.push_str(&csv_field(name));
        }
        out.push_str(",mean\n");
        for row in &self.summary {
            out.push_str(&row.pipeline.name());
            for v in &row.test_auc {
                out.push_str(&format!(",{v:?}"));
            }
            out.push_str(&format!(",{:?}\n", row.mean));
        }
        out
    }

    /// Human-readable table in percent.
    pub fn table(&self) -> String {
        let names = self.dataset_names();
        let mut out = format!("{:<12}", "pipeline");
        for n in &names {
            out.push_str(&format!(" {:>10}", truncate(n, 10)));
        }
        out.push_str(&format!(" {:>8}\n", "mean"));
        for row in &self.summary {
            out.push_str(&format!("{:<12}", row.pipeline.name()));
            for v in &row.test_auc {
                out.push_str(&format!(" {:>10.1}", 100.0 * v));
            }
            out.push_str(&format!(" {:>8.1}\n", 100.0 * row.mean));
        }
        for a in &self.anova {
            match (&a.result, &a.note) {
                (Some(r), _) => out.push_str(&format!(
                    "ANOVA {}: F({}, {}) = {:.3}, p = {:.3}\n",
                    a.groups.join(" vs "),
                    r.df_between,
                    r.df_within,
                    r.f,
                    r.p
                )),
                (None, Some(note)) => out.push_str(&format!("ANOVA {}: {note}\n", a.groups.join(" vs "))),
                (None, None) => {}
            }
        }
        out
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
