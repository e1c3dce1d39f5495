use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auc, f1};
use super::EvalError;
use crate::dataset::Label;
use crate::model::Aggregation;

/// Accuracy and AUC of one branch on its own scores. `auc` is `None` when
/// the scored set holds a single class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchMetrics {
    pub acc: f64,
    pub auc: Option<f64>,
}

impl BranchMetrics {
    pub fn from_scores(scores: &[(f64, Label)], threshold: f64) -> Result<Self, EvalError> {
        Ok(Self {
            acc: accuracy(scores, threshold)?,
            auc: auc(scores).ok(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerBranch {
    pub ori: BranchMetrics,
    pub res: BranchMetrics,
    /// Flow-map baseline, present when such a model was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<BranchMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedScore {
    pub id: String,
    pub p_ori: f64,
    pub p_res: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_flow: Option<f64>,
    pub p: f64,
    pub label: Label,
}

/// Per-dataset evaluation. Serialised field order is the declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_tag: String,
    pub n_real: usize,
    pub n_fake: usize,
    pub n_skipped: usize,
    pub skipped_ids: Vec<String>,
    pub alpha: f64,
    pub beta: f64,
    pub threshold: f64,
    pub aggregation: Aggregation,
    pub acc: f64,
    pub auc: Option<f64>,
    pub f1: f64,
    pub per_branch: PerBranch,
    /// Sorted by video id.
    pub fused_scores: Vec<FusedScore>,
}

/// Fused-set metrics recomputed from a list of fused scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recomputed {
    pub acc: f64,
    pub auc: Option<f64>,
    pub f1: f64,
    pub ori: BranchMetrics,
    pub res: BranchMetrics,
    pub flow: Option<BranchMetrics>,
}

pub fn recompute(fused: &[FusedScore], threshold: f64) -> Result<Recomputed, EvalError> {
    let col = |f: &dyn Fn(&FusedScore) -> f64| -> Vec<(f64, Label)> {
        fused.iter().map(|s| (f(s), s.label)).collect()
    };
    let p = col(&|s| s.p);
    let flow = if fused.iter().all(|s| s.p_flow.is_some()) && !fused.is_empty() {
        Some(BranchMetrics::from_scores(
            &col(&|s| s.p_flow.unwrap()),
            threshold,
        )?)
    } else {
        None
    };
    Ok(Recomputed {
        acc: accuracy(&p, threshold)?,
        auc: auc(&p).ok(),
        f1: f1(&p, threshold)?,
        ori: BranchMetrics::from_scores(&col(&|s| s.p_ori), threshold)?,
        res: BranchMetrics::from_scores(&col(&|s| s.p_res), threshold)?,
        flow,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Tab-separated `id p_ori p_res [p_flow] p label` with a header line.
    pub fn scores_tsv(&self) -> String {
        let with_flow = self.per_branch.flow.is_some();
        let mut out = String::from("id\tp_ori\tp_res\t");
        if with_flow {
            out.push_str("p_flow\t");
        }
        out.push_str("p\tlabel\n");
        for s in &self.fused_scores {
            let _ = write!(out, "{}\t{:?}\t{:?}\t", s.id, s.p_ori, s.p_res);
            if let (true, Some(pf)) = (with_flow, s.p_flow) {
                let _ = write!(out, "{pf:?}\t");
            }
            let _ = writeln!(out, "{:?}\t{}", s.p, s.label);
        }
        out
    }

    pub fn write(&self, json_path: &Path, tsv_path: &Path) -> std::io::Result<()> {
        std::fs::write(json_path, self.to_json())?;
        std::fs::write(tsv_path, self.scores_tsv())
    }

    /// Main-results row: `tag  ACC  AUC  F1` in percent.
    pub fn comparison_row(&self) -> String {
        comparison_row(&self.dataset_tag, self.acc, self.auc, self.f1)
    }

    /// Flow-versus-residual row, when the flow baseline was evaluated.
    pub fn ablation_row(&self) -> Option<String> {
        let flow = self.per_branch.flow?;
        Some(ablation_row(&self.dataset_tag, flow, self.per_branch.res))
    }
}

fn pct(x: Option<f64>, decimals: usize, collapse_perfect: bool) -> String {
    match x {
        None => "-".to_string(),
        Some(v) => {
            let s = format!("{:.*}", decimals, v * 100.0);
            if collapse_perfect && s.trim_end_matches('0').trim_end_matches('.') == "100" {
                "100".to_string()
            } else {
                s
            }
        }
    }
}

/// One decimal, with a perfect score printed as a bare `100`.
pub fn comparison_row(tag: &str, acc: f64, auc: Option<f64>, f1: f64) -> String {
    format!(
        "{tag}\t{}\t{}\t{}",
        pct(Some(acc), 1, true),
        pct(auc, 1, true),
        pct(Some(f1), 1, true)
    )
}

/// Two decimals: flow ACC, flow AUC, residual ACC, residual AUC.
pub fn ablation_row(tag: &str, flow: BranchMetrics, res: BranchMetrics) -> String {
    format!(
        "{tag}\t{}\t{}\t{}\t{}",
        pct(Some(flow.acc), 2, false),
        pct(flow.auc, 2, false),
        pct(Some(res.acc), 2, false),
        pct(res.auc, 2, false)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparison_row_format() {
        assert_eq!(
            comparison_row("Sora", 0.948, Some(0.995), 0.945),
            "Sora\t94.8\t99.5\t94.5"
        );
        assert_eq!(
            comparison_row("Emu", 1.0, Some(1.0), 0.9996),
            "Emu\t100\t100\t100"
        );
        assert_eq!(comparison_row("x", 0.5, None, 0.0), "x\t50.0\t-\t0.0");
    }

    #[test]
    fn ablation_row_format() {
        let flow = BranchMetrics {
            acc: 0.6595,
            auc: Some(0.9317),
        };
        let res = BranchMetrics {
            acc: 0.8865,
            auc: Some(0.9873),
        };
        assert_eq!(
            ablation_row("NeverEnds", flow, res),
            "NeverEnds\t65.95\t93.17\t88.65\t98.73"
        );
    }
}
