//! Training-free aggregation rules mapping an N×K score matrix to one score
//! per sample.
//!
//! Three groups: probability-space averages, logit-space averages, and
//! prompt-wise logit corrections that remove per-prompt bias (and optionally
//! rescale to a common spread) before averaging. Correction statistics are
//! label-free and are normally fit on the evaluation matrix itself.

use serde::{Deserialize, Serialize};

use crate::data::PromptScoreMatrix;
use crate::error::{Error, Result};

/// Sigma values below this floor are raised to it before division in the
/// bias+scale transform, so constant prompt columns cannot blow up.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Default per-side trim fraction for the trimmed rules.
pub const DEFAULT_TRIM: f64 = 0.1;

/// Logit with endpoint clipping: `log(p'/(1-p'))` for `p'` clamped to
/// `[eps, 1-eps]`. The inverse is [`sigmoid`].
pub fn to_logit(p: f64, eps: f64) -> f64 {
    let p = p.clamp(eps, 1.0 - eps);
    (p / (1.0 - p)).ln()
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One of the training-free aggregation rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregationRule {
    MeanProb,
    TrimmedMean { trim_fraction: f64 },
    MedianProb,
    EntropyWeightedMean,
    MeanLogit,
    MeanLogitUniform,
    TrimmedLogitMean { trim_fraction: f64 },
    MedianLogit,
    BiasCorrectedLogitMean,
    BiasScaleLogitMean,
    BiasScaleShrink { alpha: f64 },
}

impl AggregationRule {
    /// The 15 rule instantiations of the reference sweep.
    pub fn standard_sweep(trim_fraction: f64, shrink_alphas: &[f64]) -> Vec<AggregationRule> {
        let mut rules = vec![
            AggregationRule::MeanProb,
            AggregationRule::TrimmedMean { trim_fraction },
            AggregationRule::MedianProb,
            AggregationRule::EntropyWeightedMean,
            AggregationRule::MeanLogit,
            AggregationRule::MeanLogitUniform,
            AggregationRule::TrimmedLogitMean { trim_fraction },
            AggregationRule::MedianLogit,
            AggregationRule::BiasCorrectedLogitMean,
            AggregationRule::BiasScaleLogitMean,
        ];
        rules.extend(
            shrink_alphas
                .iter()
                .map(|&alpha| AggregationRule::BiasScaleShrink { alpha }),
        );
        rules
    }

    /// Whether the rule needs fitted [`LogitCorrectionStats`].
    pub fn needs_stats(&self) -> bool {
        matches!(
            self,
            AggregationRule::BiasCorrectedLogitMean
                | AggregationRule::BiasScaleLogitMean
                | AggregationRule::BiasScaleShrink { .. }
        )
    }

    fn validate(&self, k: usize) -> Result<()> {
        match *self {
            AggregationRule::TrimmedMean { trim_fraction }
            | AggregationRule::TrimmedLogitMean { trim_fraction } => {
                if !trim_fraction.is_finite() || trim_fraction < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "trim_fraction {trim_fraction} must be a nonnegative number"
                    )));
                }
                let per_side = (trim_fraction * k as f64).floor() as usize;
                if 2 * per_side >= k {
                    return Err(Error::InvalidInput(format!(
                        "trim removes all prompts: 2*floor({trim_fraction}*{k}) >= {k}"
                    )));
                }
            }
            AggregationRule::BiasScaleShrink { alpha }
                if !(0.0..=1.0).contains(&alpha) => {
                    return Err(Error::InvalidInput(format!("shrink alpha {alpha} outside [0,1]")));
                }
            _ => {}
        }
        Ok(())
    }
}

impl std::fmt::Display for AggregationRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            AggregationRule::MeanProb => f.write_str("mean_prob"),
            AggregationRule::TrimmedMean { trim_fraction } if trim_fraction == DEFAULT_TRIM => {
                f.write_str("trimmed_mean")
            }
            AggregationRule::TrimmedMean { trim_fraction } => {
                write!(f, "trimmed_mean_{trim_fraction}")
            }
            AggregationRule::MedianProb => f.write_str("median_prob"),
            AggregationRule::EntropyWeightedMean => f.write_str("entropy_weighted_mean"),
            AggregationRule::MeanLogit => f.write_str("mean_logit"),
            AggregationRule::MeanLogitUniform => f.write_str("mean_logit_uniform"),
            AggregationRule::TrimmedLogitMean { trim_fraction }
                if trim_fraction == DEFAULT_TRIM =>
            {
                f.write_str("trimmed_logit_mean")
            }
            AggregationRule::TrimmedLogitMean { trim_fraction } => {
                write!(f, "trimmed_logit_mean_{trim_fraction}")
            }
            AggregationRule::MedianLogit => f.write_str("median_logit"),
            AggregationRule::BiasCorrectedLogitMean => f.write_str("bias_corrected_logit_mean"),
            AggregationRule::BiasScaleLogitMean => f.write_str("bias_scale_logit_mean"),
            AggregationRule::BiasScaleShrink { alpha } => write!(f, "bias_scale_shrink_{alpha}"),
        }
    }
}

impl std::str::FromStr for AggregationRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parse_suffix = |prefix: &str| -> Result<f64> {
            s[prefix.len()..]
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad rule parameter in '{s}'")))
        };
        match s {
            "mean_prob" => Ok(AggregationRule::MeanProb),
            "trimmed_mean" => Ok(AggregationRule::TrimmedMean { trim_fraction: DEFAULT_TRIM }),
            "median_prob" => Ok(AggregationRule::MedianProb),
            "entropy_weighted_mean" => Ok(AggregationRule::EntropyWeightedMean),
            "mean_logit" => Ok(AggregationRule::MeanLogit),
            "mean_logit_uniform" => Ok(AggregationRule::MeanLogitUniform),
            "trimmed_logit_mean" => {
                Ok(AggregationRule::TrimmedLogitMean { trim_fraction: DEFAULT_TRIM })
            }
            "median_logit" => Ok(AggregationRule::MedianLogit),
            "bias_corrected_logit_mean" => Ok(AggregationRule::BiasCorrectedLogitMean),
            "bias_scale_logit_mean" => Ok(AggregationRule::BiasScaleLogitMean),
            _ if s.starts_with("bias_scale_shrink_") => Ok(AggregationRule::BiasScaleShrink {
                alpha: parse_suffix("bias_scale_shrink_")?,
            }),
            _ if s.starts_with("trimmed_mean_") => Ok(AggregationRule::TrimmedMean {
                trim_fraction: parse_suffix("trimmed_mean_")?,
            }),
            _ if s.starts_with("trimmed_logit_mean_") => Ok(AggregationRule::TrimmedLogitMean {
                trim_fraction: parse_suffix("trimmed_logit_mean_")?,
            }),
            other => Err(Error::InvalidInput(format!("unknown aggregation rule '{other}'"))),
        }
    }
}

/// Per-prompt logit location/scale estimates and their pooled targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitCorrectionStats {
    /// Prompt ids the statistics were fit on, in column order.
    pub prompt_ids: Vec<u32>,
    /// Per-prompt logit mean across samples.
    pub mu_hat: Vec<f64>,
    /// Per-prompt population logit standard deviation across samples.
    pub sigma_hat: Vec<f64>,
    /// Pooled location target: mean of `mu_hat`.
    pub mu_star: f64,
    /// Pooled spread target: mean of `sigma_hat`.
    pub sigma_star: f64,
}

impl LogitCorrectionStats {
    /// Bias-only corrected logit for column `k`.
    pub fn bias_correct(&self, z: f64, k: usize) -> f64 {
        z - (self.mu_hat[k] - self.mu_star)
    }

    /// Bias+scale corrected logit for column `k` (sigma floored).
    pub fn bias_scale(&self, z: f64, k: usize) -> f64 {
        (z - self.mu_hat[k]) / self.sigma_hat[k].max(SIGMA_FLOOR) * self.sigma_star + self.mu_star
    }

    /// Partial shrinkage toward the bias+scale target.
    pub fn shrink(&self, z: f64, k: usize, alpha: f64) -> f64 {
        z + alpha * (self.bias_scale(z, k) - z)
    }

    fn check_compatible(&self, matrix: &PromptScoreMatrix) -> Result<()> {
        let ids: Vec<u32> = matrix.prompts().iter().map(|p| p.prompt_id).collect();
        if ids != self.prompt_ids {
            return Err(Error::InvalidInput(format!(
                "correction stats fit on prompts {:?} but matrix has {:?}",
                self.prompt_ids, ids
            )));
        }
        Ok(())
    }
}

/// Fit per-prompt logit mean/std (population convention) and pooled targets.
pub fn fit_logit_correction(matrix: &PromptScoreMatrix, eps: f64) -> Result<LogitCorrectionStats> {
    let n = matrix.n_samples();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "logit correction needs at least 2 samples, got {n}"
        )));
    }
    let k = matrix.n_prompts();
    let mut mu_hat = vec![0.0; k];
    let mut sigma_hat = vec![0.0; k];
    for kk in 0..k {
        let logits: Vec<f64> = (0..n).map(|i| to_logit(matrix.score(i, kk), eps)).collect();
        let mu = logits.iter().sum::<f64>() / n as f64;
        let var = logits.iter().map(|z| (z - mu) * (z - mu)).sum::<f64>() / n as f64;
        mu_hat[kk] = mu;
        sigma_hat[kk] = var.sqrt();
    }
    let mu_star = mu_hat.iter().sum::<f64>() / k as f64;
    let sigma_star = sigma_hat.iter().sum::<f64>() / k as f64;
    Ok(LogitCorrectionStats {
        prompt_ids: matrix.prompts().iter().map(|p| p.prompt_id).collect(),
        mu_hat,
        sigma_hat,
        mu_star,
        sigma_star,
    })
}

/// Apply one aggregation rule, producing one score in `[0,1]` per sample.
///
/// Correction rules require `stats` fitted on a matrix with the identical
/// prompt set; see [`aggregate_transductive`] for the label-free default.
pub fn aggregate(
    matrix: &PromptScoreMatrix,
    rule: &AggregationRule,
    stats: Option<&LogitCorrectionStats>,
    eps: f64,
) -> Result<Vec<f64>> {
    let k = matrix.n_prompts();
    rule.validate(k)?;
    let stats = if rule.needs_stats() {
        let s = stats.ok_or_else(|| {
            Error::InvalidInput(format!("rule '{rule}' requires logit correction stats"))
        })?;
        s.check_compatible(matrix)?;
        Some(s)
    } else {
        None
    };

    let n = matrix.n_samples();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = matrix.row(i);
        let score = match *rule {
            AggregationRule::MeanProb => mean(row),
            AggregationRule::TrimmedMean { trim_fraction } => trimmed_mean(row, trim_fraction),
            AggregationRule::MedianProb => median(row),
            AggregationRule::EntropyWeightedMean => entropy_weighted_mean(row),
            AggregationRule::MeanLogit | AggregationRule::MeanLogitUniform => {
                sigmoid(mean(&logits(row, eps)))
            }
            AggregationRule::TrimmedLogitMean { trim_fraction } => {
                sigmoid(trimmed_mean(&logits(row, eps), trim_fraction))
            }
            AggregationRule::MedianLogit => sigmoid(median(&logits(row, eps))),
            AggregationRule::BiasCorrectedLogitMean => {
                let s = stats.unwrap();
                let corrected: Vec<f64> = logits(row, eps)
                    .iter()
                    .enumerate()
                    .map(|(kk, &z)| s.bias_correct(z, kk))
                    .collect();
                sigmoid(mean(&corrected))
            }
            AggregationRule::BiasScaleLogitMean => {
                let s = stats.unwrap();
                let corrected: Vec<f64> = logits(row, eps)
                    .iter()
                    .enumerate()
                    .map(|(kk, &z)| s.bias_scale(z, kk))
                    .collect();
                sigmoid(mean(&corrected))
            }
            AggregationRule::BiasScaleShrink { alpha } => {
                let s = stats.unwrap();
                let corrected: Vec<f64> = logits(row, eps)
                    .iter()
                    .enumerate()
                    .map(|(kk, &z)| s.shrink(z, kk, alpha))
                    .collect();
                sigmoid(mean(&corrected))
            }
        };
        out.push(score.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// [`aggregate`] with correction statistics fit on the evaluation matrix
/// itself (label-free, so still training-free).
pub fn aggregate_transductive(
    matrix: &PromptScoreMatrix,
    rule: &AggregationRule,
    eps: f64,
) -> Result<Vec<f64>> {
    if rule.needs_stats() {
        let stats = fit_logit_correction(matrix, eps)?;
        aggregate(matrix, rule, Some(&stats), eps)
    } else {
        aggregate(matrix, rule, None, eps)
    }
}

/// Mean probability over the first `k` prompts of a ranking.
///
/// `ranking` is a permutation of the matrix's prompt ids, best first.
/// `k = K` reproduces the full mean ensemble.
pub fn top_k_mean(matrix: &PromptScoreMatrix, ranking: &[u32], k: usize) -> Result<Vec<f64>> {
    let total = matrix.n_prompts();
    if ranking.len() != total {
        return Err(Error::InvalidInput(format!(
            "ranking has {} entries for {} prompts",
            ranking.len(),
            total
        )));
    }
    let mut sorted_ranking: Vec<u32> = ranking.to_vec();
    sorted_ranking.sort_unstable();
    let mut ids: Vec<u32> = matrix.prompts().iter().map(|p| p.prompt_id).collect();
    ids.sort_unstable();
    if sorted_ranking != ids {
        return Err(Error::InvalidInput("ranking is not a permutation of the prompt ids".into()));
    }
    if k == 0 || k > total {
        return Err(Error::InvalidInput(format!("k {k} outside 1..={total}")));
    }
    let cols: Vec<usize> = ranking[..k]
        .iter()
        .map(|&id| matrix.prompt_index(id).expect("validated above"))
        .collect();
    Ok((0..matrix.n_samples())
        .map(|i| {
            let row = matrix.row(i);
            cols.iter().map(|&c| row[c]).sum::<f64>() / k as f64
        })
        .collect())
}

fn logits(row: &[f64], eps: f64) -> Vec<f64> {
    row.iter().map(|&p| to_logit(p, eps)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn trimmed_mean(xs: &[f64], trim_fraction: f64) -> f64 {
    let k = xs.len();
    let per_side = (trim_fraction * k as f64).floor() as usize;
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    mean(&v[per_side..k - per_side])
}

/// Binary entropy in bits, so maximal uncertainty gives weight exactly 0.
fn binary_entropy_bits(p: f64) -> f64 {
    let term = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

fn entropy_weighted_mean(row: &[f64]) -> f64 {
    let weights: Vec<f64> = row
        .iter()
        .map(|&p| (1.0 - binary_entropy_bits(p)).max(0.0))
        .collect();
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        // Every prompt maximally uncertain: fall back to uniform weights.
        return mean(row);
    }
    row.iter().zip(&weights).map(|(&p, &w)| p * w).sum::<f64>() / total
}
