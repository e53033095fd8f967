//! Gaussian naive Bayes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::space::WorkgroupSize;

/// Added to every variance, scaled by the largest feature variance, so
/// constant features do not produce zero-width likelihoods.
pub const VAR_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub label: WorkgroupSize,
    pub log_prior: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub classes: Vec<ClassModel>,
}

impl GaussianNb {
    /// `labels` must be sorted and `y` index into it.
    pub(crate) fn fit(x: &[Vec<f64>], y: &[usize], labels: &[WorkgroupSize]) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;

        let mut overall_var: f64 = 0.0;
        for f in 0..d {
            let mean = x.iter().map(|r| r[f]).sum::<f64>() / n;
            let var = x.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n;
            overall_var = overall_var.max(var);
        }
        let eps = if overall_var > 0.0 {
            VAR_SMOOTHING * overall_var
        } else {
            VAR_SMOOTHING
        };

        let classes = labels
            .iter()
            .enumerate()
            .map(|(k, &label)| {
                let members: Vec<&Vec<f64>> =
                    x.iter().zip(y).filter(|(_, &c)| c == k).map(|(r, _)| r).collect();
                let m = members.len() as f64;
                let mean: Vec<f64> = (0..d)
                    .map(|f| members.iter().map(|r| r[f]).sum::<f64>() / m)
                    .collect();
                let var = (0..d)
                    .map(|f| {
                        members.iter().map(|r| (r[f] - mean[f]).powi(2)).sum::<f64>() / m + eps
                    })
                    .collect();
                ClassModel {
                    label,
                    log_prior: (m / n).ln(),
                    mean,
                    var,
                }
            })
            .collect();
        Self { classes }
    }

    /// Unnormalised log posterior of each class, in label order.
    pub fn log_posteriors(&self, x: &[f64]) -> Vec<f64> {
        self.classes
            .iter()
            .map(|c| {
                let mut lp = c.log_prior;
                for ((xi, mu), var) in x.iter().zip(&c.mean).zip(&c.var) {
                    lp -= 0.5 * (2.0 * PI * var).ln() + (xi - mu).powi(2) / (2.0 * var);
                }
                lp
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> WorkgroupSize {
        let lp = self.log_posteriors(x);
        let mut best = 0;
        for (k, v) in lp.iter().enumerate() {
            if *v > lp[best] {
                best = k;
            }
        }
        self.classes[best].label
    }
}
