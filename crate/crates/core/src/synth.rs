//! Synthetic prompt-score matrices with controlled per-prompt corruption,
//! plus the independent brute-force oracles used by the verification suite.
//!
//! Labels are drawn from the latent score, so an uncorrupted prompt is
//! calibrated by construction; that gives analytic ground truth for the
//! calibrator-recovery tests.

use serde::{Deserialize, Serialize};

use crate::aggregate::sigmoid;
use crate::data::{Label, PromptFamily, PromptMeta, PromptScoreMatrix, Split};
use crate::error::{Error, Result};
use crate::rng::Pcg32;

/// Generator parameters. All randomness comes from PCG32 seeded with
/// `seed` (stream 0), in a fixed draw order, so generation is fully
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub k_prompts: usize,
    /// Std of the latent sample logit.
    pub latent_logit_std: f64,
    /// Std of the per-prompt additive logit bias.
    pub per_prompt_bias_std: f64,
    /// Uniform range for the per-prompt logit scale factor.
    pub per_prompt_scale_range: (f64, f64),
    /// Std of per-cell logit noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.k_prompts == 0 {
            return Err(Error::InvalidInput("n_samples and k_prompts must be >= 1".into()));
        }
        let latent_ok = self.latent_logit_std.is_finite() && self.latent_logit_std > 0.0;
        if !latent_ok {
            return Err(Error::InvalidInput("latent_logit_std must be > 0".into()));
        }
        if self.per_prompt_bias_std < 0.0 || self.noise_std < 0.0 {
            return Err(Error::InvalidInput("bias/noise stds must be >= 0".into()));
        }
        let (lo, hi) = self.per_prompt_scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidInput(format!(
                "scale range ({lo}, {hi}) must satisfy 0 < lo <= hi"
            )));
        }
        Ok(())
    }
}

/// Generate a labeled matrix: latent `z_i ~ N(0, latent^2)`, label
/// `y_i ~ Bernoulli(sigmoid(z_i))`, prompt logits
/// `z_ik = a_k + b_k * z_i + noise`, scores `sigmoid(z_ik)`.
///
/// Prompt families are three contiguous blocks (5/5/5 at K=15). All rows
/// are tagged train; callers retag splits for locked-protocol runs.
pub fn generate(config: &SynthConfig) -> Result<PromptScoreMatrix> {
    config.validate()?;
    let mut rng = Pcg32::new(config.seed, 0);
    let k = config.k_prompts;
    let n = config.n_samples;

    // Per-prompt corruption parameters first, interleaved a_k then b_k.
    let mut bias = Vec::with_capacity(k);
    let mut scale = Vec::with_capacity(k);
    let (lo, hi) = config.per_prompt_scale_range;
    for _ in 0..k {
        bias.push(config.per_prompt_bias_std * rng.normal());
        scale.push(rng.uniform(lo, hi));
    }

    let mut labels = Vec::with_capacity(n);
    let mut p_unsafe = Vec::with_capacity(n * k);
    for _ in 0..n {
        let z = config.latent_logit_std * rng.normal();
        let y = rng.next_f64() < sigmoid(z);
        labels.push(if y { Label::Unsafe } else { Label::Safe });
        for kk in 0..k {
            let noise = config.noise_std * rng.normal();
            p_unsafe.push(sigmoid(bias[kk] + scale[kk] * z + noise));
        }
    }

    let prompts: Vec<PromptMeta> = (0..k)
        .map(|kk| PromptMeta {
            prompt_id: kk as u32 + 1,
            family: match kk * 3 / k {
                0 => PromptFamily::A,
                1 => PromptFamily::B,
                _ => PromptFamily::C,
            },
        })
        .collect();

    PromptScoreMatrix::new(
        (0..n).map(|i| format!("synth-{i:06}")).collect(),
        vec!["synth".into(); n],
        labels,
        vec![Split::Train; n],
        prompts,
        p_unsafe,
    )
}

/// AUROC by explicit O(N^2) pairwise comparison: 1 credit when the
/// positive outranks the negative, half credit on ties.
pub fn oracle_auroc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput("scores and labels must be aligned".into()));
    }
    if scores.len() > 1000 {
        return Err(Error::InvalidInput("oracle_auroc is O(N^2); use N <= 1000".into()));
    }
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| l.is_unsafe())
        .map(|(&p, _)| p)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| !l.is_unsafe())
        .map(|(&p, _)| p)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedMetric("AUROC needs both classes present".into()));
    }
    let mut credit = 0.0;
    for &p in &pos {
        for &q in &neg {
            if p > q {
                credit += 1.0;
            } else if p == q {
                credit += 0.5;
            }
        }
    }
    Ok(credit / (pos.len() as f64 * neg.len() as f64))
}

/// Monotone least-squares by exhaustive search over block partitions of
/// the score-sorted sequence (tied scores stay together). Returns fitted
/// values in input order. Limited to N <= 8.
pub fn oracle_isotonic(scores: &[f64], labels: &[Label]) -> Result<Vec<f64>> {
    let n = scores.len();
    if n != labels.len() || n == 0 {
        return Err(Error::InvalidInput("scores and labels must be non-empty and aligned".into()));
    }
    if n > 8 {
        return Err(Error::InvalidInput("oracle_isotonic is exhaustive; use N <= 8".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Distinct-score groups; a fitted function of the score must give all
    // members of a group the same value.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &idx in &order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[idx] => g.push(idx),
            _ => groups.push(vec![idx]),
        }
    }
    let g = groups.len();

    let mut best: Option<(f64, Vec<f64>)> = None;
    // Bit j of the mask cuts between group j and group j+1.
    for mask in 0u32..(1 << (g - 1)) {
        let mut block_values = Vec::new();
        let mut assignments: Vec<(usize, f64)> = Vec::new(); // (sample, value)
        let mut feasible = true;
        let mut sse = 0.0;
        let mut block_members: Vec<usize> = Vec::new();
        for (j, group) in groups.iter().enumerate() {
            block_members.extend(group);
            let cut_here = j == g - 1 || (mask >> j) & 1 == 1;
            if cut_here {
                let sum: f64 = block_members.iter().map(|&i| labels[i].indicator()).sum();
                let v = sum / block_members.len() as f64;
                if let Some(&prev) = block_values.last() {
                    if v < prev {
                        feasible = false;
                        break;
                    }
                }
                block_values.push(v);
                for &i in &block_members {
                    let d = v - labels[i].indicator();
                    sse += d * d;
                    assignments.push((i, v));
                }
                block_members.clear();
            }
        }
        if !feasible {
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            let mut values = vec![0.0; n];
            for (i, v) in assignments {
                values[i] = v;
            }
            best = Some((sse, values));
        }
    }
    Ok(best.expect("the single-block partition is always feasible").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{aggregate_transductive, to_logit, AggregationRule};
    use crate::metrics::auroc;

    fn config(seed: u64) -> SynthConfig {
        SynthConfig {
            n_samples: 50,
            k_prompts: 15,
            latent_logit_std: 1.0,
            per_prompt_bias_std: 1.0,
            per_prompt_scale_range: (0.5, 2.0),
            noise_std: 0.5,
            seed,
        }
    }

    #[test]
    fn same_seed_same_matrix() {
        let a = generate(&config(42)).unwrap();
        let b = generate(&config(42)).unwrap();
        assert_eq!(a, b);
        let c = generate(&config(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_corruption_gives_identical_columns() {
        let cfg = SynthConfig {
            per_prompt_bias_std: 0.0,
            per_prompt_scale_range: (1.0, 1.0),
            noise_std: 0.0,
            ..config(3)
        };
        let m = generate(&cfg).unwrap();
        for i in 0..m.n_samples() {
            let row = m.row(i);
            for &p in row {
                assert_eq!(p, row[0]);
            }
        }
    }

    #[test]
    fn families_partition_5_5_5_at_k15() {
        let m = generate(&config(1)).unwrap();
        let count = |f: PromptFamily| m.prompts().iter().filter(|p| p.family == f).count();
        assert_eq!(count(PromptFamily::A), 5);
        assert_eq!(count(PromptFamily::B), 5);
        assert_eq!(count(PromptFamily::C), 5);
    }

    #[test]
    fn rejects_invalid_config() {
        let mut cfg = config(0);
        cfg.latent_logit_std = 0.0;
        assert!(generate(&cfg).is_err());
        let mut cfg = config(0);
        cfg.per_prompt_scale_range = (0.0, 1.0);
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn labels_track_latent_scores() {
        let cfg = SynthConfig {
            n_samples: 4000,
            per_prompt_bias_std: 0.0,
            per_prompt_scale_range: (1.0, 1.0),
            noise_std: 0.0,
            ..config(11)
        };
        let m = generate(&cfg).unwrap();
        let col = m.column(0);
        let a = auroc(&col, m.labels(), None).unwrap();
        assert!(a > 0.6, "uncorrupted prompt should rank labels well, got {a}");
    }

    #[test]
    fn bias_correction_recovers_shifted_latent() {
        let cfg = SynthConfig {
            n_samples: 200,
            k_prompts: 5,
            latent_logit_std: 1.0,
            per_prompt_bias_std: 0.8,
            per_prompt_scale_range: (1.0, 1.0),
            noise_std: 0.0,
            seed: 17,
        };
        let m = generate(&cfg).unwrap();
        let corrected =
            aggregate_transductive(&m, &AggregationRule::BiasCorrectedLogitMean, 1e-12).unwrap();
        // Recover each sample's latent logit from any column. With scale 1
        // and no noise, z_ik = a_k + z_i, and the column means reveal the
        // mean bias across prompts.
        let k = m.n_prompts();
        let n = m.n_samples();
        let col_logit = |i: usize, kk: usize| to_logit(m.score(i, kk), 1e-12);
        let col_means: Vec<f64> = (0..k)
            .map(|kk| (0..n).map(|i| col_logit(i, kk)).sum::<f64>() / n as f64)
            .collect();
        let grand = col_means.iter().sum::<f64>() / k as f64;
        for (i, &got) in corrected.iter().enumerate() {
            // z_i + a_bar = z_i0 - mu_0 + grand mean
            let want = sigmoid(col_logit(i, 0) - col_means[0] + grand);
            assert!((got - want).abs() < 1e-9, "sample {i}");
        }
    }

    #[test]
    fn oracle_auroc_examples() {
        let labels = [Label::Safe, Label::Safe, Label::Unsafe, Label::Unsafe];
        assert_eq!(oracle_auroc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(oracle_auroc(&[0.5, 0.5, 0.5, 0.5], &labels).unwrap(), 0.5);
        assert!(oracle_auroc(&[0.5], &[Label::Unsafe]).is_err());
    }

    #[test]
    fn oracle_isotonic_monotone_is_identity() {
        let labels = [Label::Safe, Label::Safe, Label::Unsafe, Label::Unsafe];
        let v = oracle_isotonic(&[0.1, 0.3, 0.4, 0.9], &labels).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn oracle_isotonic_pools_inversion() {
        let v = oracle_isotonic(&[0.2, 0.8], &[Label::Unsafe, Label::Safe]).unwrap();
        assert_eq!(v, vec![0.5, 0.5]);
    }

    #[test]
    fn oracle_isotonic_respects_input_order() {
        let v = oracle_isotonic(&[0.8, 0.2], &[Label::Safe, Label::Unsafe]).unwrap();
        assert_eq!(v, vec![0.5, 0.5]);
        let w = oracle_isotonic(&[0.9, 0.1], &[Label::Unsafe, Label::Safe]).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
    }

    #[test]
    fn oracle_isotonic_rejects_large_n() {
        let scores = vec![0.5; 9];
        let labels = vec![Label::Unsafe; 9];
        assert!(oracle_isotonic(&scores, &labels).is_err());
    }
}
