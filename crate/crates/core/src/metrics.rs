//! Scalar evaluation metrics (NLL, ECE variants, AUROC, AUPRC, thresholded
//! error), all with optional per-sample weights, plus the per-sample
//! fragility diagnostics and their decile summaries.
//!
//! Weighted and unweighted paths must agree under uniform weights; the
//! unweighted AUROC deliberately uses a different algorithm (rank statistic)
//! from the weighted mass sweep so the two cross-check each other.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Label, PromptScoreMatrix};
use crate::error::{Error, Result};

/// ECE binning scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EceScheme {
    EqualWidth,
    EqualMass,
}

/// ECE bin specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EceSpec {
    pub bins: usize,
    pub scheme: EceScheme,
}

impl EceSpec {
    pub fn equal_width(bins: usize) -> Self {
        EceSpec { bins, scheme: EceScheme::EqualWidth }
    }

    pub fn equal_mass(bins: usize) -> Self {
        EceSpec { bins, scheme: EceScheme::EqualMass }
    }

    /// The four binning variants of the reference robustness harness.
    pub fn robustness_variants() -> [EceSpec; 4] {
        [
            EceSpec::equal_width(10),
            EceSpec::equal_width(15),
            EceSpec::equal_width(20),
            EceSpec::equal_mass(15),
        ]
    }

    /// Stable report identifier, e.g. `ece_w15`, `ece_m15`.
    pub fn identifier(&self) -> String {
        let scheme = match self.scheme {
            EceScheme::EqualWidth => "w",
            EceScheme::EqualMass => "m",
        };
        format!("ece_{}{}", scheme, self.bins)
    }
}

fn indicators(labels: &[Label]) -> Vec<f64> {
    labels.iter().map(|l| l.indicator()).collect()
}

fn check_lengths(scores: &[f64], labels: &[Label], weights: Option<&[f64]>) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("empty score vector".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != scores.len() {
            return Err(Error::InvalidInput(format!(
                "{} scores but {} weights",
                scores.len(),
                w.len()
            )));
        }
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        if w.iter().sum::<f64>() == 0.0 {
            return Err(Error::InvalidInput("weights must not all be zero".into()));
        }
    }
    Ok(())
}

/// Per-sample negative log-likelihood contributions with probability
/// clipping at `eps`.
pub fn nll_contributions(scores: &[f64], labels: &[Label], eps: f64) -> Vec<f64> {
    scores
        .iter()
        .zip(labels)
        .map(|(&p, l)| {
            let p = p.clamp(eps, 1.0 - eps);
            if l.is_unsafe() {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .collect()
}

/// Weighted mean Bernoulli negative log-likelihood (natural log, clipped).
pub fn nll(scores: &[f64], labels: &[Label], weights: Option<&[f64]>, eps: f64) -> Result<f64> {
    check_lengths(scores, labels, weights)?;
    let contrib = nll_contributions(scores, labels, eps);
    Ok(match weights {
        None => contrib.iter().sum::<f64>() / contrib.len() as f64,
        Some(w) => {
            let num: f64 = contrib.iter().zip(w).map(|(c, &wi)| wi * c).sum();
            num / w.iter().sum::<f64>()
        }
    })
}

/// Equal-width bin index: `min(floor(p*bins), bins-1)`, so a boundary score
/// goes to the higher bin except p=1.0, which stays in the top bin.
pub fn equal_width_bin(p: f64, bins: usize) -> usize {
    ((p * bins as f64).floor() as usize).min(bins - 1)
}

fn bin_assignment(scores: &[f64], spec: EceSpec) -> Vec<usize> {
    match spec.scheme {
        EceScheme::EqualWidth => {
            scores.iter().map(|&p| equal_width_bin(p, spec.bins)).collect()
        }
        EceScheme::EqualMass => {
            // Contiguous rank partition with group sizes differing by <= 1;
            // ties broken by sample index.
            let n = scores.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
            let mut assign = vec![0usize; n];
            for g in 0..spec.bins {
                let lo = g * n / spec.bins;
                let hi = (g + 1) * n / spec.bins;
                for &idx in &order[lo..hi] {
                    assign[idx] = g;
                }
            }
            assign
        }
    }
}

/// Binary expected calibration error: bin-mass-weighted |freq - conf|.
pub fn ece(scores: &[f64], labels: &[Label], spec: EceSpec, weights: Option<&[f64]>) -> Result<f64> {
    check_lengths(scores, labels, weights)?;
    if spec.bins < 2 {
        return Err(Error::InvalidInput("ECE needs at least 2 bins".into()));
    }
    let ys = indicators(labels);
    let assign = bin_assignment(scores, spec);
    let mut w_sum = vec![0.0; spec.bins];
    let mut conf_sum = vec![0.0; spec.bins];
    let mut freq_sum = vec![0.0; spec.bins];
    for (i, &b) in assign.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        w_sum[b] += w;
        conf_sum[b] += w * scores[i];
        freq_sum[b] += w * ys[i];
    }
    let total: f64 = w_sum.iter().sum();
    let mut out = 0.0;
    for b in 0..spec.bins {
        if w_sum[b] > 0.0 {
            out += (w_sum[b] / total) * ((freq_sum[b] - conf_sum[b]) / w_sum[b]).abs();
        }
    }
    Ok(out)
}

/// AUROC: probability a random positive outranks a random negative, ties
/// counted half (Mann-Whitney). Weighted inputs use weight-mass pairs.
pub fn auroc(scores: &[f64], labels: &[Label], weights: Option<&[f64]>) -> Result<f64> {
    check_lengths(scores, labels, weights)?;
    match weights {
        None => auroc_ranks(scores, labels),
        Some(w) => auroc_mass(scores, labels, w),
    }
}

/// Tie-corrected rank statistic, used for the unweighted path.
fn auroc_ranks(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let n = scores.len();
    let n_pos = labels.iter().filter(|l| l.is_unsafe()).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUROC needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank over the tie group [i, j).
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx].is_unsafe() {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Weight-mass sweep in ascending score order.
fn auroc_mass(scores: &[f64], labels: &[Label], weights: &[f64]) -> Result<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let pos_mass: f64 = (0..n).filter(|&i| labels[i].is_unsafe()).map(|i| weights[i]).sum();
    let neg_mass: f64 = (0..n).filter(|&i| !labels[i].is_unsafe()).map(|i| weights[i]).sum();
    if pos_mass <= 0.0 || neg_mass <= 0.0 {
        return Err(Error::UndefinedMetric(
            "weighted AUROC needs positive mass in both classes".into(),
        ));
    }
    let mut credit = 0.0;
    let mut neg_below = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        let mut group_pos = 0.0;
        let mut group_neg = 0.0;
        while j < n && scores[order[j]] == scores[order[i]] {
            let idx = order[j];
            if labels[idx].is_unsafe() {
                group_pos += weights[idx];
            } else {
                group_neg += weights[idx];
            }
            j += 1;
        }
        credit += group_pos * (neg_below + 0.5 * group_neg);
        neg_below += group_neg;
        i = j;
    }
    Ok(credit / (pos_mass * neg_mass))
}

/// Average precision: sum over descending-score threshold steps of
/// (recall gain) x (precision), tied scores collapsed into one step, no
/// interpolation.
pub fn auprc(scores: &[f64], labels: &[Label], weights: Option<&[f64]>) -> Result<f64> {
    check_lengths(scores, labels, weights)?;
    let n = scores.len();
    let w_of = |i: usize| weights.map_or(1.0, |w| w[i]);
    let pos_mass: f64 = (0..n).filter(|&i| labels[i].is_unsafe()).map(w_of).sum();
    if pos_mass <= 0.0 {
        return Err(Error::UndefinedMetric("AUPRC needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ap = 0.0;
    let mut tp = 0.0;
    let mut retrieved = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        let mut group_tp = 0.0;
        let mut group_all = 0.0;
        while j < n && scores[order[j]] == scores[order[i]] {
            let idx = order[j];
            group_all += w_of(idx);
            if labels[idx].is_unsafe() {
                group_tp += w_of(idx);
            }
            j += 1;
        }
        tp += group_tp;
        retrieved += group_all;
        if group_tp > 0.0 {
            ap += (group_tp / pos_mass) * (tp / retrieved);
        }
        i = j;
    }
    Ok(ap)
}

/// Weighted misclassification rate with the boundary predicted unsafe.
pub fn error_at_threshold(
    scores: &[f64],
    labels: &[Label],
    threshold: f64,
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_lengths(scores, labels, weights)?;
    let mut wrong = 0.0;
    let mut total = 0.0;
    for (i, (&p, l)) in scores.iter().zip(labels).enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let predicted_unsafe = p >= threshold;
        if predicted_unsafe != l.is_unsafe() {
            wrong += w;
        }
        total += w;
    }
    Ok(wrong / total)
}

/// Full metric bundle for one score vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nll: f64,
    /// Keyed by ECE identifier (`ece_w15`, ...).
    pub ece: BTreeMap<String, f64>,
    /// `None` marks a metric undefined on this input (single class).
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub error_at_threshold: f64,
    pub n: usize,
    pub weighted: bool,
}

impl EvalReport {
    /// Compute all metrics; ranking metrics undefined on single-class input
    /// are reported as `None` rather than sentinels.
    pub fn compute(
        scores: &[f64],
        labels: &[Label],
        weights: Option<&[f64]>,
        eps: f64,
        threshold: f64,
    ) -> Result<EvalReport> {
        let mut ece_map = BTreeMap::new();
        for spec in EceSpec::robustness_variants() {
            ece_map.insert(spec.identifier(), ece(scores, labels, spec, weights)?);
        }
        let optional = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(EvalReport {
            nll: nll(scores, labels, weights, eps)?,
            ece: ece_map,
            auroc: optional(auroc(scores, labels, weights))?,
            auprc: optional(auprc(scores, labels, weights))?,
            error_at_threshold: error_at_threshold(scores, labels, threshold, weights)?,
            n: scores.len(),
            weighted: weights.is_some(),
        })
    }
}

/// Per-decile means of the fragility statistics, deciles ordered by
/// ascending cross-prompt standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileSummary {
    pub mistake_by_decile: Vec<f64>,
    pub disagreement_by_decile: Vec<f64>,
    pub mistake_gap: f64,
    pub disagreement_gap: f64,
}

/// Per-sample fragility diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragilityProfile {
    /// Mean unsafe score across prompts.
    pub mu: Vec<f64>,
    /// Cross-prompt population standard deviation.
    pub sigma: Vec<f64>,
    /// Fraction of prompts whose thresholded prediction misses the label.
    pub mistake_rate: Vec<f64>,
    /// 1 - (majority vote size)/K; zero iff all prompt predictions agree.
    pub disagreement_rate: Vec<f64>,
    /// Present when N >= 10.
    pub decile_summary: Option<DecileSummary>,
}

/// Which fragility statistic a decile query summarizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragilityStat {
    Mistake,
    Disagreement,
}

/// Lowest/highest-decile means and their gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecileGaps {
    pub d1_mean: f64,
    pub d10_mean: f64,
    pub gap: f64,
}

/// Compute per-sample fragility diagnostics for a labeled matrix.
pub fn fragility_profile(matrix: &PromptScoreMatrix, threshold: f64) -> FragilityProfile {
    let n = matrix.n_samples();
    let k = matrix.n_prompts();
    let mut mu = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut mistake = Vec::with_capacity(n);
    let mut disagreement = Vec::with_capacity(n);
    for i in 0..n {
        let row = matrix.row(i);
        let m = row.iter().sum::<f64>() / k as f64;
        // Exact zero for constant rows: the mean of equal values is not
        // bit-exact, and sigma == 0 iff all prompts agree is a contract.
        let var = if row.iter().all(|&p| p == row[0]) {
            0.0
        } else {
            row.iter().map(|&p| (p - m) * (p - m)).sum::<f64>() / k as f64
        };
        let unsafe_votes = row.iter().filter(|&&p| p >= threshold).count();
        let wrong = if matrix.labels()[i].is_unsafe() {
            k - unsafe_votes
        } else {
            unsafe_votes
        };
        mu.push(m);
        sigma.push(var.sqrt());
        mistake.push(wrong as f64 / k as f64);
        disagreement.push(1.0 - unsafe_votes.max(k - unsafe_votes) as f64 / k as f64);
    }
    let mut profile = FragilityProfile {
        mu,
        sigma,
        mistake_rate: mistake,
        disagreement_rate: disagreement,
        decile_summary: None,
    };
    if n >= 10 {
        let mistakes = decile_means(&profile, FragilityStat::Mistake);
        let disagreements = decile_means(&profile, FragilityStat::Disagreement);
        profile.decile_summary = Some(DecileSummary {
            mistake_gap: mistakes[9] - mistakes[0],
            disagreement_gap: disagreements[9] - disagreements[0],
            mistake_by_decile: mistakes,
            disagreement_by_decile: disagreements,
        });
    }
    profile
}

fn decile_means(profile: &FragilityProfile, stat: FragilityStat) -> Vec<f64> {
    let n = profile.sigma.len();
    let values = match stat {
        FragilityStat::Mistake => &profile.mistake_rate,
        FragilityStat::Disagreement => &profile.disagreement_rate,
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| profile.sigma[a].total_cmp(&profile.sigma[b]).then(a.cmp(&b)));
    (0..10)
        .map(|d| {
            let lo = d * n / 10;
            let hi = (d + 1) * n / 10;
            order[lo..hi].iter().map(|&i| values[i]).sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Mean statistic over the lowest- and highest-sigma deciles and the
/// D10 - D1 gap. Requires N >= 10.
pub fn decile_gaps(profile: &FragilityProfile, stat: FragilityStat) -> Result<DecileGaps> {
    let n = profile.sigma.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!(
            "decile analysis needs at least 10 samples, got {n}"
        )));
    }
    let means = decile_means(profile, stat);
    Ok(DecileGaps {
        d1_mean: means[0],
        d10_mean: means[9],
        gap: means[9] - means[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PromptFamily, PromptMeta, Split};
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    fn labels(tags: &str) -> Vec<Label> {
        tags.chars()
            .map(|c| if c == 'U' { Label::Unsafe } else { Label::Safe })
            .collect()
    }

    #[test]
    fn nll_coin_flip() {
        let v = nll(&[0.5, 0.5], &labels("US"), None, EPS).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn nll_clips_degenerate_scores() {
        let v = nll(&[0.0], &labels("U"), None, EPS).unwrap();
        assert!((v - 27.631021115928547).abs() < 1e-6);
    }

    #[test]
    fn nll_constant_weights_match_unweighted() {
        let scores = [0.2, 0.6, 0.9, 0.4];
        let ls = labels("USUS");
        let a = nll(&scores, &ls, None, EPS).unwrap();
        let b = nll(&scores, &ls, Some(&[3.0, 3.0, 3.0, 3.0]), EPS).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn nll_rejects_all_zero_weights() {
        let err = nll(&[0.5], &labels("U"), Some(&[0.0]), EPS).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn nll_rejects_length_mismatch() {
        assert!(nll(&[0.5, 0.5], &labels("U"), None, EPS).is_err());
    }

    #[test]
    fn ece_single_occupied_bin() {
        let v = ece(&[0.8, 0.8], &labels("US"), EceSpec::equal_width(15), None).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ece_perfectly_calibrated_endpoints() {
        let v = ece(&[0.0, 1.0], &labels("SU"), EceSpec::equal_width(15), None).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn ece_uniform_weights_match_unweighted() {
        let scores = [0.1, 0.35, 0.62, 0.97, 0.51];
        let ls = labels("SUSUU");
        for spec in EceSpec::robustness_variants() {
            let a = ece(&scores, &ls, spec, None).unwrap();
            let b = ece(&scores, &ls, spec, Some(&[2.0; 5])).unwrap();
            assert!((a - b).abs() < 1e-12, "{}", spec.identifier());
        }
    }

    #[test]
    fn ece_equal_mass_rank_partition() {
        let v = ece(&[0.1, 0.2, 0.3, 0.4], &labels("SSUU"), EceSpec::equal_mass(2), None).unwrap();
        // Bins {0.1,0.2} (conf .15, freq 0) and {0.3,0.4} (conf .35, freq 1).
        assert!((v - 0.4).abs() < 1e-12);
    }

    #[test]
    fn ece_boundary_goes_to_higher_bin() {
        assert_eq!(equal_width_bin(0.2, 10), 2);
        assert_eq!(equal_width_bin(1.0, 10), 9);
        assert_eq!(equal_width_bin(0.0, 10), 0);
    }

    #[test]
    fn auroc_hand_example() {
        let v = auroc(&[0.1, 0.4, 0.35, 0.8], &labels("SSUU"), None).unwrap();
        assert!((v - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auroc_perfect_and_tied() {
        let v = auroc(&[0.1, 0.2, 0.8, 0.9], &labels("SSUU"), None).unwrap();
        assert_eq!(v, 1.0);
        let t = auroc(&[0.5, 0.5, 0.5, 0.5], &labels("SSUU"), None).unwrap();
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auroc_single_class_is_undefined() {
        let err = auroc(&[0.5, 0.6], &labels("UU"), None).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(_)));
    }

    #[test]
    fn auroc_weighted_uniform_matches_rank_path() {
        let scores = [0.15, 0.4, 0.4, 0.8, 0.62, 0.4];
        let ls = labels("SUSUUS");
        let a = auroc(&scores, &ls, None).unwrap();
        let b = auroc(&scores, &ls, Some(&[1.0; 6])).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn auprc_hand_example() {
        let v = auprc(&[0.9, 0.8, 0.7], &labels("USU"), None).unwrap();
        assert!((v - (0.5 + 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn auprc_top_ranked_positive() {
        let v = auprc(&[0.9, 0.1, 0.2, 0.3, 0.4], &labels("USSSS"), None).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn auprc_all_positive() {
        let v = auprc(&[0.2, 0.9, 0.5], &labels("UUU"), None).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auprc_no_positives_is_undefined() {
        assert!(matches!(
            auprc(&[0.5], &labels("S"), None),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn error_boundary_counts_as_unsafe() {
        let v = error_at_threshold(&[0.5], &labels("U"), 0.5, None).unwrap();
        assert_eq!(v, 0.0);
        let wrong = error_at_threshold(&[0.4, 0.6], &labels("US"), 0.5, None).unwrap();
        assert_eq!(wrong, 1.0);
        let right = error_at_threshold(&[0.4, 0.6], &labels("SU"), 0.5, None).unwrap();
        assert_eq!(right, 0.0);
    }

    fn tiny_matrix(rows: &[Vec<f64>], ls: &str) -> PromptScoreMatrix {
        let n = rows.len();
        let k = rows[0].len();
        PromptScoreMatrix::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            vec!["d".into(); n],
            labels(ls),
            vec![Split::Test; n],
            (1..=k as u32)
                .map(|id| PromptMeta { prompt_id: id, family: PromptFamily::A })
                .collect(),
            rows.iter().flatten().copied().collect(),
        )
        .unwrap()
    }

    #[test]
    fn fragility_population_std() {
        let m = tiny_matrix(&[vec![0.0, 1.0]], "U");
        let p = fragility_profile(&m, 0.5);
        assert!((p.sigma[0] - 0.5).abs() < 1e-15);
        assert_eq!(p.mu[0], 0.5);
    }

    #[test]
    fn fragility_disagreement_formula() {
        let mut row = vec![0.9; 8];
        row.extend(vec![0.1; 7]);
        let m = tiny_matrix(&[row], "U");
        let p = fragility_profile(&m, 0.5);
        assert!((p.disagreement_rate[0] - (1.0 - 8.0 / 15.0)).abs() < 1e-12);
        assert!((p.mistake_rate[0] - 7.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn fragility_all_correct() {
        let m = tiny_matrix(&[vec![0.9, 0.8, 0.7]], "U");
        let p = fragility_profile(&m, 0.5);
        assert_eq!(p.mistake_rate[0], 0.0);
        assert_eq!(p.disagreement_rate[0], 0.0);
    }

    #[test]
    fn sigma_zero_iff_constant_row() {
        let m = tiny_matrix(&[vec![0.4, 0.4, 0.4], vec![0.4, 0.41, 0.4]], "US");
        let p = fragility_profile(&m, 0.5);
        assert_eq!(p.sigma[0], 0.0);
        assert!(p.sigma[1] > 0.0);
    }

    fn profile_with(sigma: Vec<f64>, mistake: Vec<f64>) -> FragilityProfile {
        let n = sigma.len();
        FragilityProfile {
            mu: vec![0.5; n],
            sigma,
            mistake_rate: mistake,
            disagreement_rate: vec![0.0; n],
            decile_summary: None,
        }
    }

    #[test]
    fn decile_gap_monotone_construction() {
        let n = 20;
        let sigma: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let stat: Vec<f64> = (1..=n).map(|i| if i > 10 { 1.0 } else { 0.0 }).collect();
        let p = profile_with(sigma, stat);
        let g = decile_gaps(&p, FragilityStat::Mistake).unwrap();
        assert_eq!(g.d1_mean, 0.0);
        assert_eq!(g.d10_mean, 1.0);
        assert_eq!(g.gap, 1.0);
    }

    #[test]
    fn decile_ties_use_index_order() {
        let n = 10;
        let stat: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let p = profile_with(vec![0.3; n], stat);
        let g = decile_gaps(&p, FragilityStat::Mistake).unwrap();
        assert_eq!(g.d1_mean, 0.0);
        assert_eq!(g.d10_mean, 9.0);
    }

    #[test]
    fn decile_needs_ten_samples() {
        let p = profile_with(vec![0.1; 9], vec![0.0; 9]);
        assert!(matches!(
            decile_gaps(&p, FragilityStat::Mistake),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn eval_report_marks_undefined_ranking_metrics() {
        let r = EvalReport::compute(&[0.2, 0.8], &labels("UU"), None, EPS, 0.5).unwrap();
        assert!(r.auroc.is_none());
        assert!(r.auprc.is_some()); // all-positive AUPRC is defined
        assert_eq!(r.ece.len(), 4);
    }

    proptest! {
        #[test]
        fn ece_invariant_to_sample_permutation(
            scores in proptest::collection::vec(0.0f64..=1.0, 5..60),
            seed in 0u64..1000,
        ) {
            let n = scores.len();
            let ls: Vec<Label> = (0..n)
                .map(|i| if (i * 7 + 3) % 5 < 2 { Label::Unsafe } else { Label::Safe })
                .collect();
            let mut rng = crate::rng::Pcg32::new(seed, 0);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.below(i as u32 + 1) as usize;
                perm.swap(i, j);
            }
            let p_scores: Vec<f64> = perm.iter().map(|&i| scores[i]).collect();
            let p_labels: Vec<Label> = perm.iter().map(|&i| ls[i]).collect();
            for spec in EceSpec::robustness_variants() {
                let a = ece(&scores, &ls, spec, None).unwrap();
                let b = ece(&p_scores, &p_labels, spec, None).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn ranking_metrics_invariant_to_monotone_transform(
            scores in proptest::collection::vec(0.001f64..=0.999, 6..80),
        ) {
            let n = scores.len();
            let ls: Vec<Label> = (0..n)
                .map(|i| if i % 3 == 0 { Label::Unsafe } else { Label::Safe })
                .collect();
            let transformed: Vec<f64> = scores
                .iter()
                .map(|&p| crate::aggregate::to_logit(p, 1e-12))
                .collect();
            let a1 = auroc(&scores, &ls, None).unwrap();
            let a2 = auroc(&transformed, &ls, None).unwrap();
            prop_assert!((a1 - a2).abs() < 1e-12);
            let p1 = auprc(&scores, &ls, None).unwrap();
            let p2 = auprc(&transformed, &ls, None).unwrap();
            prop_assert!((p1 - p2).abs() < 1e-12);
        }
    }
}
