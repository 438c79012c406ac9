//! Composite evaluation protocols: aggregation-rule sweeps with win counts,
//! selective prediction with AURC, per-sample bootstrap deltas, and
//! prevalence-reweighted stress tests.
//!
//! Bootstrap resamples draw from independent per-resample PCG32 streams
//! derived from the master seed, so parallel and serial execution feed
//! bit-identical delta vectors into the percentile step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_transductive, AggregationRule};
use crate::config::PrevalenceTarget;
use crate::data::{Label, PromptScoreMatrix};
use crate::error::{Error, Result};
use crate::metrics::{
    ece, equal_width_bin, error_at_threshold, nll, nll_contributions, EceSpec,
};
use crate::rng::resample_rng;

// ---------------------------------------------------------------------------
// Rule sweep
// ---------------------------------------------------------------------------

/// Win counts and average NLL ranks for a set of methods over evaluation
/// pairs. A win is the strictly lowest NLL on a pair; exact ties share the
/// win. Ranks use the average-rank convention for ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinCountTable {
    pub methods: Vec<String>,
    pub wins: Vec<usize>,
    pub avg_rank: Vec<f64>,
    pub pairs_evaluated: usize,
    /// (pair label, reason) for pairs that failed metric preconditions.
    pub excluded: Vec<(String, String)>,
}

/// Average ranks (1 = smallest value), ties averaged.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

/// Evaluate every rule's NLL on every labeled pair and tabulate wins and
/// average ranks. Pairs on which any rule fails its preconditions are
/// excluded and reported.
pub fn sweep_rules(
    pairs: &[(String, &PromptScoreMatrix)],
    rules: &[AggregationRule],
    eps: f64,
) -> Result<WinCountTable> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one evaluation pair".into()));
    }
    if rules.len() < 2 {
        return Err(Error::InvalidInput("sweep needs at least two rules".into()));
    }
    let methods: Vec<String> = rules.iter().map(|r| r.to_string()).collect();
    let mut wins = vec![0usize; rules.len()];
    let mut rank_sums = vec![0.0; rules.len()];
    let mut excluded = Vec::new();
    let mut evaluated = 0usize;

    for (label, matrix) in pairs {
        let nlls: Result<Vec<f64>> = rules
            .iter()
            .map(|rule| {
                let scores = aggregate_transductive(matrix, rule, eps)?;
                nll(&scores, matrix.labels(), None, eps)
            })
            .collect();
        let nlls = match nlls {
            Ok(v) => v,
            Err(e) => {
                excluded.push((label.clone(), e.to_string()));
                continue;
            }
        };
        let best = nlls.iter().copied().fold(f64::INFINITY, f64::min);
        for (i, &v) in nlls.iter().enumerate() {
            if v == best {
                wins[i] += 1;
            }
        }
        for (i, r) in average_ranks(&nlls).into_iter().enumerate() {
            rank_sums[i] += r;
        }
        evaluated += 1;
    }

    if evaluated == 0 {
        return Err(Error::InsufficientData(format!(
            "every pair failed: {:?}",
            excluded
        )));
    }
    Ok(WinCountTable {
        methods,
        wins,
        avg_rank: rank_sums.iter().map(|s| s / evaluated as f64).collect(),
        pairs_evaluated: evaluated,
        excluded,
    })
}

// ---------------------------------------------------------------------------
// Uncertainty signals and selective prediction
// ---------------------------------------------------------------------------

/// Which per-sample uncertainty signal to compute (higher = more uncertain).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyKind {
    /// Cross-prompt standard deviation of the unsafe probability.
    StdPU,
    /// Predictive entropy of the mean unsafe score (natural log).
    EntropyMean,
    /// Confidence margin of the selected single prompt.
    MarginSingle,
}

impl std::fmt::Display for UncertaintyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UncertaintyKind::StdPU => "std_pu",
            UncertaintyKind::EntropyMean => "entropy_mean",
            UncertaintyKind::MarginSingle => "margin_single",
        })
    }
}

impl std::str::FromStr for UncertaintyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std_pu" => Ok(UncertaintyKind::StdPU),
            "entropy_mean" => Ok(UncertaintyKind::EntropyMean),
            "margin_single" => Ok(UncertaintyKind::MarginSingle),
            other => Err(Error::InvalidInput(format!("unknown uncertainty signal '{other}'"))),
        }
    }
}

/// Per-sample uncertainty values under one signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySignal {
    pub kind: UncertaintyKind,
    pub values: Vec<f64>,
}

/// Compute an uncertainty signal from the prompt-score matrix.
/// `MarginSingle` requires the locked selected prompt id.
pub fn uncertainty(
    matrix: &PromptScoreMatrix,
    selected_prompt: Option<u32>,
    kind: UncertaintyKind,
) -> Result<UncertaintySignal> {
    let k = matrix.n_prompts() as f64;
    let values = match kind {
        UncertaintyKind::StdPU => (0..matrix.n_samples())
            .map(|i| {
                let row = matrix.row(i);
                if row.iter().all(|&p| p == row[0]) {
                    return 0.0;
                }
                let mu = row.iter().sum::<f64>() / k;
                (row.iter().map(|&p| (p - mu) * (p - mu)).sum::<f64>() / k).sqrt()
            })
            .collect(),
        UncertaintyKind::EntropyMean => (0..matrix.n_samples())
            .map(|i| {
                let mu = matrix.row(i).iter().sum::<f64>() / k;
                let term = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
                term(mu) + term(1.0 - mu)
            })
            .collect(),
        UncertaintyKind::MarginSingle => {
            let id = selected_prompt.ok_or_else(|| {
                Error::InvalidInput("margin_single needs a selected prompt id".into())
            })?;
            let col = matrix.prompt_index(id).ok_or_else(|| {
                Error::InvalidInput(format!("prompt id {id} not in matrix"))
            })?;
            matrix.column(col).iter().map(|&p| 1.0 - (2.0 * p - 1.0).abs()).collect()
        }
    };
    Ok(UncertaintySignal { kind, values })
}

/// Retained risk at a grid of coverage levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub coverage: f64,
    pub retained: usize,
    pub error: f64,
    pub nll: f64,
    pub ece: f64,
}

/// Risk-coverage curve over the evaluated grid (grid order preserved).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub points: Vec<CoveragePoint>,
}

/// Which retained metric an AURC query integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetainedMetric {
    Error,
    Nll,
    Ece,
}

impl RetainedMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            RetainedMetric::Error => "err",
            RetainedMetric::Nll => "nll",
            RetainedMetric::Ece => "ece",
        }
    }
}

/// At each coverage c, retain the `round(c*N)` samples with the lowest
/// uncertainty (ties by sample index ascending) and evaluate error, NLL,
/// and 15-bin equal-width ECE on the retained set.
pub fn risk_coverage(
    scores: &[f64],
    labels: &[Label],
    signal: &[f64],
    grid: &[f64],
    eps: f64,
    threshold: f64,
) -> Result<CoverageCurve> {
    let n = scores.len();
    if signal.len() != n || labels.len() != n {
        return Err(Error::InvalidInput("scores, labels, and signal must be aligned".into()));
    }
    crate::config::validate_coverage_grid(grid)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| signal[a].total_cmp(&signal[b]).then(a.cmp(&b)));

    let mut points = Vec::with_capacity(grid.len());
    for &c in grid {
        let m = (c * n as f64 + 0.5).floor() as usize;
        let m = m.min(n);
        if m == 0 {
            return Err(Error::InsufficientData(format!(
                "coverage {c} retains no samples at N={n}"
            )));
        }
        let kept = &order[..m];
        let r_scores: Vec<f64> = kept.iter().map(|&i| scores[i]).collect();
        let r_labels: Vec<Label> = kept.iter().map(|&i| labels[i]).collect();
        points.push(CoveragePoint {
            coverage: c,
            retained: m,
            error: error_at_threshold(&r_scores, &r_labels, threshold, None)?,
            nll: nll(&r_scores, &r_labels, None, eps)?,
            ece: ece(&r_scores, &r_labels, EceSpec::equal_width(15), None)?,
        });
    }
    Ok(CoverageCurve { points })
}

/// Normalized area under the risk-coverage curve by trapezoidal
/// integration over the evaluated grid points only; the range endpoints
/// must themselves be grid points.
pub fn aurc(curve: &CoverageCurve, metric: RetainedMetric, c_min: f64, c_max: f64) -> Result<f64> {
    let range_ok = c_min.is_finite() && c_max.is_finite() && c_min < c_max;
    if !range_ok {
        return Err(Error::InvalidInput(format!("bad AURC range [{c_min}, {c_max}]")));
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let mut pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.coverage >= c_min - 1e-12 && p.coverage <= c_max + 1e-12)
        .map(|p| {
            let r = match metric {
                RetainedMetric::Error => p.error,
                RetainedMetric::Nll => p.nll,
                RetainedMetric::Ece => p.ece,
            };
            (p.coverage, r)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "AURC over [{c_min}, {c_max}] needs at least 2 grid points, found {}",
            pts.len()
        )));
    }
    if !close(pts[0].0, c_min) || !close(pts[pts.len() - 1].0, c_max) {
        return Err(Error::InvalidInput(format!(
            "AURC range endpoints [{c_min}, {c_max}] must be evaluated grid points"
        )));
    }
    let mut area = 0.0;
    for w in pts.windows(2) {
        area += 0.5 * (w[1].1 + w[0].1) * (w[1].0 - w[0].0);
    }
    Ok(area / (c_max - c_min))
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

/// Metric resampled by the bootstrap. NLL and 15-bin equal-width ECE are
/// defined on every resample, so no resample can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMetric {
    Nll,
    EceW15,
}

impl BootstrapMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            BootstrapMetric::Nll => "nll",
            BootstrapMetric::EceW15 => "ece_w15",
        }
    }
}

impl std::str::FromStr for BootstrapMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nll" => Ok(BootstrapMetric::Nll),
            "ece_w15" => Ok(BootstrapMetric::EceW15),
            other => Err(Error::InvalidInput(format!("unknown bootstrap metric '{other}'"))),
        }
    }
}

/// Point delta with a 95% percentile CI and two-sided bootstrap p-value.
///
/// The delta is baseline minus candidate, so positive means the candidate
/// improves the metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point_delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_two_sided: f64,
    pub b: usize,
    pub seed: u64,
    pub delta_convention: String,
}

const ECE_BINS: usize = 15;

struct BootstrapPrecomp<'a> {
    metric: BootstrapMetric,
    contrib_a: Vec<f64>,
    contrib_b: Vec<f64>,
    bins_a: Vec<usize>,
    bins_b: Vec<usize>,
    scores_a: &'a [f64],
    scores_b: &'a [f64],
    ys: Vec<f64>,
    weights: Option<&'a [f64]>,
}

impl<'a> BootstrapPrecomp<'a> {
    fn new(
        metric: BootstrapMetric,
        scores_a: &'a [f64],
        scores_b: &'a [f64],
        labels: &[Label],
        weights: Option<&'a [f64]>,
        eps: f64,
    ) -> Self {
        let (contrib_a, contrib_b, bins_a, bins_b) = match metric {
            BootstrapMetric::Nll => (
                nll_contributions(scores_a, labels, eps),
                nll_contributions(scores_b, labels, eps),
                Vec::new(),
                Vec::new(),
            ),
            BootstrapMetric::EceW15 => (
                Vec::new(),
                Vec::new(),
                scores_a.iter().map(|&p| equal_width_bin(p, ECE_BINS)).collect(),
                scores_b.iter().map(|&p| equal_width_bin(p, ECE_BINS)).collect(),
            ),
        };
        BootstrapPrecomp {
            metric,
            contrib_a,
            contrib_b,
            bins_a,
            bins_b,
            scores_a,
            scores_b,
            ys: labels.iter().map(|l| l.indicator()).collect(),
            weights,
        }
    }

    /// Metric delta on one resample with weights refit from the resampled
    /// labels. Importance weights depend only on the class, so refitting
    /// reduces to two scalars. Undefined when the resample is single-class.
    fn delta_refit(&self, indices: &[usize], target: f64) -> Result<f64> {
        let n = indices.len();
        let pos = indices.iter().filter(|&&i| self.ys[i] == 1.0).count();
        if pos == 0 || pos == n {
            return Err(Error::UndefinedMetric(
                "refit prevalence weights need both classes in the resample".into(),
            ));
        }
        let pi_hat = pos as f64 / n as f64;
        let w_pos = target / pi_hat;
        let w_neg = (1.0 - target) / (1.0 - pi_hat);
        Ok(self.delta_with(indices.iter().copied(), |i| {
            if self.ys[i] == 1.0 {
                w_pos
            } else {
                w_neg
            }
        }))
    }

    /// Metric delta on one resample of indices.
    fn delta(&self, draw: impl Iterator<Item = usize>) -> f64 {
        self.delta_with(draw, |i| self.weights.map_or(1.0, |w| w[i]))
    }

    fn delta_with(&self, draw: impl Iterator<Item = usize>, weight: impl Fn(usize) -> f64) -> f64 {
        match self.metric {
            BootstrapMetric::Nll => {
                let (mut acc_a, mut acc_b, mut wsum) = (0.0, 0.0, 0.0);
                for idx in draw {
                    let w = weight(idx);
                    acc_a += w * self.contrib_a[idx];
                    acc_b += w * self.contrib_b[idx];
                    wsum += w;
                }
                acc_a / wsum - acc_b / wsum
            }
            BootstrapMetric::EceW15 => {
                let mut wa = [0.0f64; ECE_BINS];
                let mut pa = [0.0f64; ECE_BINS];
                let mut ya = [0.0f64; ECE_BINS];
                let mut wb = [0.0f64; ECE_BINS];
                let mut pb = [0.0f64; ECE_BINS];
                let mut yb = [0.0f64; ECE_BINS];
                for idx in draw {
                    let w = weight(idx);
                    let ba = self.bins_a[idx];
                    wa[ba] += w;
                    pa[ba] += w * self.scores_a[idx];
                    ya[ba] += w * self.ys[idx];
                    let bb = self.bins_b[idx];
                    wb[bb] += w;
                    pb[bb] += w * self.scores_b[idx];
                    yb[bb] += w * self.ys[idx];
                }
                let fold = |w: &[f64; ECE_BINS], p: &[f64; ECE_BINS], y: &[f64; ECE_BINS]| {
                    let total: f64 = w.iter().sum();
                    let mut out = 0.0;
                    for b in 0..ECE_BINS {
                        if w[b] > 0.0 {
                            out += (w[b] / total) * ((y[b] - p[b]) / w[b]).abs();
                        }
                    }
                    out
                };
                fold(&wa, &pa, &ya) - fold(&wb, &pb, &yb)
            }
        }
    }

    /// Metric delta on the full (unresampled) sample, via the reference
    /// metric implementations.
    fn point_delta(&self, labels: &[Label], eps: f64) -> Result<f64> {
        Ok(match self.metric {
            BootstrapMetric::Nll => {
                nll(self.scores_a, labels, self.weights, eps)?
                    - nll(self.scores_b, labels, self.weights, eps)?
            }
            BootstrapMetric::EceW15 => {
                let spec = EceSpec::equal_width(ECE_BINS);
                ece(self.scores_a, labels, spec, self.weights)?
                    - ece(self.scores_b, labels, spec, self.weights)?
            }
        })
    }
}

/// Linear interpolation between order statistics (q in [0,1]).
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// How per-sample weights enter the resampling loop.
enum WeightMode<'a> {
    /// Weights fixed up front (None means unweighted).
    Fixed(Option<&'a [f64]>),
    /// Importance weights recomputed per resample toward this target rate;
    /// the fixed full-sample weights still define the point estimate.
    Refit { target: f64, full_weights: &'a [f64] },
}

#[allow(clippy::too_many_arguments)]
fn bootstrap_weighted(
    scores_baseline: &[f64],
    scores_candidate: &[f64],
    labels: &[Label],
    metric: BootstrapMetric,
    b: usize,
    seed: u64,
    eps: f64,
    mode: WeightMode<'_>,
) -> Result<BootstrapResult> {
    let n = scores_baseline.len();
    if n == 0 || scores_candidate.len() != n || labels.len() != n {
        return Err(Error::InvalidInput("bootstrap inputs must be non-empty and aligned".into()));
    }
    let weights = match mode {
        WeightMode::Fixed(w) => w,
        WeightMode::Refit { full_weights, .. } => Some(full_weights),
    };
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::InvalidInput("weights length mismatch".into()));
        }
    }
    if b == 0 {
        return Err(Error::InvalidInput("bootstrap needs B >= 1".into()));
    }
    let pre = BootstrapPrecomp::new(metric, scores_baseline, scores_candidate, labels, weights, eps);
    let point_delta = pre.point_delta(labels, eps)?;

    let raw: Result<Vec<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = resample_rng(seed, idx);
            match mode {
                WeightMode::Fixed(_) => {
                    Ok(pre.delta((0..n).map(|_| rng.below(n as u32) as usize)))
                }
                WeightMode::Refit { target, .. } => {
                    let indices: Vec<usize> =
                        (0..n).map(|_| rng.below(n as u32) as usize).collect();
                    pre.delta_refit(&indices, target)
                }
            }
        })
        .collect();
    let mut deltas = raw?;
    deltas.sort_by(f64::total_cmp);

    let n_le = deltas.iter().filter(|&&d| d <= 0.0).count();
    let n_ge = deltas.iter().filter(|&&d| d >= 0.0).count();
    let p = (2.0 * (n_le.min(n_ge) as f64) / b as f64).clamp(0.0, 1.0);

    Ok(BootstrapResult {
        point_delta,
        ci_low: percentile_sorted(&deltas, 0.025),
        ci_high: percentile_sorted(&deltas, 0.975),
        p_two_sided: p,
        b,
        seed,
        delta_convention: "baseline_minus_candidate".to_string(),
    })
}

/// Nonparametric per-sample bootstrap of the metric delta between a
/// baseline and a candidate score vector. Each resample draws N indices
/// with replacement and recomputes both metrics independently.
pub fn bootstrap_delta(
    scores_baseline: &[f64],
    scores_candidate: &[f64],
    labels: &[Label],
    metric: BootstrapMetric,
    b: usize,
    seed: u64,
    eps: f64,
) -> Result<BootstrapResult> {
    bootstrap_weighted(
        scores_baseline,
        scores_candidate,
        labels,
        metric,
        b,
        seed,
        eps,
        WeightMode::Fixed(None),
    )
}

// ---------------------------------------------------------------------------
// Prevalence stress
// ---------------------------------------------------------------------------

/// Per-sample importance weights hitting a target unsafe prevalence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceSpec {
    pub target: PrevalenceTarget,
    pub weights: Vec<f64>,
}

/// Importance weights shifting the unsafe-class mass fraction to `target`:
/// `target/pi_hat` for unsafe samples, `(1-target)/(1-pi_hat)` for safe.
/// The native target keeps all weights at 1.
pub fn prevalence_weights(labels: &[Label], target: PrevalenceTarget) -> Result<PrevalenceSpec> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::InvalidInput("no labels".into()));
    }
    let weights = match target {
        PrevalenceTarget::Native => vec![1.0; n],
        PrevalenceTarget::Rate(t) => {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidInput(format!("prevalence target {t} outside (0,1)")));
            }
            let n_pos = labels.iter().filter(|l| l.is_unsafe()).count();
            if n_pos == 0 || n_pos == n {
                return Err(Error::UndefinedMetric(
                    "prevalence reweighting needs both classes present".into(),
                ));
            }
            let pi_hat = n_pos as f64 / n as f64;
            labels
                .iter()
                .map(|l| {
                    if l.is_unsafe() {
                        t / pi_hat
                    } else {
                        (1.0 - t) / (1.0 - pi_hat)
                    }
                })
                .collect()
        }
    };
    Ok(PrevalenceSpec { target, weights })
}

/// Reweighted bootstrap deltas for one prevalence target: NLL and ECE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceStressEntry {
    pub target: PrevalenceTarget,
    pub nll: BootstrapResult,
    pub ece: BootstrapResult,
}

/// Rerun the bootstrap under per-sample importance weights for each target
/// prevalence. Weights are fixed from the full sample and applied inside
/// each resample; the native target takes the plain unweighted path, so it
/// reproduces [`bootstrap_delta`] exactly.
pub fn prevalence_stress(
    scores_baseline: &[f64],
    scores_candidate: &[f64],
    labels: &[Label],
    targets: &[PrevalenceTarget],
    b: usize,
    seed: u64,
    eps: f64,
) -> Result<Vec<PrevalenceStressEntry>> {
    prevalence_stress_opts(scores_baseline, scores_candidate, labels, targets, b, seed, eps, false)
}

/// [`prevalence_stress`] with a switch for the refit alternative: when
/// `refit_weights` is true, rate targets recompute the importance weights
/// from each resample's labels instead of reusing the full-sample weights.
/// A single-class resample makes the refit weights undefined and errors.
#[allow(clippy::too_many_arguments)]
pub fn prevalence_stress_opts(
    scores_baseline: &[f64],
    scores_candidate: &[f64],
    labels: &[Label],
    targets: &[PrevalenceTarget],
    b: usize,
    seed: u64,
    eps: f64,
    refit_weights: bool,
) -> Result<Vec<PrevalenceStressEntry>> {
    targets
        .iter()
        .map(|&target| {
            let weights = match target {
                PrevalenceTarget::Native => None,
                PrevalenceTarget::Rate(_) => Some(prevalence_weights(labels, target)?.weights),
            };
            let run = |metric| {
                let mode = match (target, &weights) {
                    (PrevalenceTarget::Native, _) => WeightMode::Fixed(None),
                    (PrevalenceTarget::Rate(t), Some(w)) if refit_weights => {
                        WeightMode::Refit { target: t, full_weights: w }
                    }
                    (PrevalenceTarget::Rate(_), w) => WeightMode::Fixed(w.as_deref()),
                };
                bootstrap_weighted(
                    scores_baseline,
                    scores_candidate,
                    labels,
                    metric,
                    b,
                    seed,
                    eps,
                    mode,
                )
            };
            Ok(PrevalenceStressEntry {
                target,
                nll: run(BootstrapMetric::Nll)?,
                ece: run(BootstrapMetric::EceW15)?,
            })
        })
        .collect()
}
