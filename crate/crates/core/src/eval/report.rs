use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Retrieval metrics of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub recall_at_1: f64,
    pub recall_at_10: f64,
    pub ndcg_at_10: f64,
    pub n_queries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation across trials; 0 for a single trial.
    pub std: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("no trial values"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Self { mean, std })
    }
}

/// Similarity of generated passages to their gold targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetrics {
    pub bleu: f64,
    pub rouge_l_f: f64,
    pub mean_words: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub per_trial: Vec<TrialMetrics>,
    pub recall_at_1: MetricSummary,
    pub recall_at_10: MetricSummary,
    pub ndcg_at_10: MetricSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationMetrics>,
    /// Free-form provenance such as the config hash and seed.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl MetricReport {
    pub fn from_trials(name: impl Into<String>, per_trial: Vec<TrialMetrics>) -> Result<Self> {
        let column = |f: fn(&TrialMetrics) -> f64| {
            MetricSummary::from_values(&per_trial.iter().map(f).collect::<Vec<_>>())
        };
        Ok(Self {
            name: name.into(),
            recall_at_1: column(|t| t.recall_at_1)?,
            recall_at_10: column(|t| t.recall_at_10)?,
            ndcg_at_10: column(|t| t.ndcg_at_10)?,
            per_trial,
            generation: None,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_generation(mut self, generation: GenerationMetrics) -> Self {
        self.generation = Some(generation);
        self
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Plain-text table with one row for this report.
    pub fn to_table(&self) -> String {
        render_table(std::slice::from_ref(self))
    }
}

/// Percent-scaled table, one row per report: `Method  R@1  R@10  nDCG@10`,
/// followed by a generation block when any report carries one.
pub fn render_table(reports: &[MetricReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.name.chars().count())
        .chain(std::iter::once("Method".len()))
        .max()
        .unwrap_or(6);
    let cell = |m: &MetricSummary| format!("{:.2} ± {:.2}", 100.0 * m.mean, 100.0 * m.std);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>15}  {:>15}  {:>15}",
        "Method", "R @ 1", "R @ 10", "nDCG @ 10"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>15}  {:>15}  {:>15}",
            r.name,
            cell(&r.recall_at_1),
            cell(&r.recall_at_10),
            cell(&r.ndcg_at_10)
        );
    }
    if reports.iter().any(|r| r.generation.is_some()) {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>8}",
            "Method", "BLEU", "ROUGE-L", "Words"
        );
        for r in reports {
            if let Some(g) = &r.generation {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>8.2}  {:>8.2}  {:>8.2}",
                    r.name,
                    100.0 * g.bleu,
                    100.0 * g.rouge_l_f,
                    g.mean_words
                );
            }
        }
    }
    out
}
