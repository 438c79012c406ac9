//! Train-locked single-prompt selection, the locked random baseline, and
//! the three labeled post-hoc calibrators (temperature, Platt, isotonic).
//!
//! Calibrators operate on the clipped logit of the input probability, so
//! temperature and Platt share one transform path. Selection and fitting
//! accept train views only; fitted calibrators are immutable.

use serde::{Deserialize, Serialize};

use crate::aggregate::{sigmoid, to_logit};
use crate::data::{Label, PromptScoreMatrix, Split};
use crate::error::{Error, Result};
use crate::metrics::{ece, error_at_threshold, nll, EceSpec};
use crate::rng::Pcg32;

/// One stage of the selection tie-break cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStage {
    pub criterion: String,
    pub survivors: Vec<u32>,
}

/// Outcome of the locked selection protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected_prompt_id: u32,
    pub criteria_trail: Vec<SelectionStage>,
}

/// Pick the prompt with minimum train NLL, breaking exact-value ties by
/// 15-bin equal-width ECE, then error at the threshold, then smallest
/// prompt id. The trail records every stage that was evaluated.
pub fn select_prompt(
    train: &PromptScoreMatrix,
    eps: f64,
    threshold: f64,
) -> Result<SelectionResult> {
    if train.n_samples() == 0 {
        return Err(Error::EmptySplit("train".into()));
    }
    if train.splits().iter().any(|&s| s != Split::Train) {
        return Err(Error::InvalidInput(
            "selection accepts train views only; filter with split_view(train) first".into(),
        ));
    }
    let labels = train.labels();
    let columns: Vec<(u32, Vec<f64>)> = train
        .prompts()
        .iter()
        .enumerate()
        .map(|(idx, p)| (p.prompt_id, train.column(idx)))
        .collect();

    let mut trail = Vec::new();
    let mut survivors: Vec<u32> = columns.iter().map(|(id, _)| *id).collect();

    // Ties are exact equality of the computed values; no epsilon window.
    let run_stage = |survivors: &[u32], metric: &dyn Fn(&[f64]) -> Result<f64>| -> Result<Vec<u32>> {
        let mut best = f64::INFINITY;
        let mut kept = Vec::new();
        for &id in survivors {
            let col = &columns.iter().find(|(cid, _)| *cid == id).unwrap().1;
            let v = metric(col)?;
            if v < best {
                best = v;
                kept = vec![id];
            } else if v == best {
                kept.push(id);
            }
        }
        Ok(kept)
    };

    for (name, metric) in [
        ("nll", Box::new(|col: &[f64]| nll(col, labels, None, eps)) as Box<dyn Fn(&[f64]) -> Result<f64>>),
        ("ece_w15", Box::new(|col: &[f64]| ece(col, labels, EceSpec::equal_width(15), None))),
        ("err05", Box::new(|col: &[f64]| error_at_threshold(col, labels, threshold, None))),
    ] {
        survivors = run_stage(&survivors, &*metric)?;
        trail.push(SelectionStage { criterion: name.to_string(), survivors: survivors.clone() });
        if survivors.len() == 1 {
            return Ok(SelectionResult { selected_prompt_id: survivors[0], criteria_trail: trail });
        }
    }

    let winner = *survivors.iter().min().unwrap();
    trail.push(SelectionStage { criterion: "prompt_id".to_string(), survivors: vec![winner] });
    Ok(SelectionResult { selected_prompt_id: winner, criteria_trail: trail })
}

/// Locked random single-prompt baseline: one PCG32 draw (stream 0) mapped
/// to 1..=k. Same seed, same prompt, forever.
pub fn locked_random_prompt(seed: u64, k: u32) -> u32 {
    debug_assert!(k >= 1);
    1 + Pcg32::new(seed, 0).below(k)
}

/// A fitted monotone map from score to probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Calibrator {
    Temperature {
        #[serde(rename = "T")]
        t: f64,
    },
    Platt {
        a: f64,
        b: f64,
    },
    Isotonic {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Calibrator {
    pub fn kind(&self) -> &'static str {
        match self {
            Calibrator::Temperature { .. } => "temperature",
            Calibrator::Platt { .. } => "platt",
            Calibrator::Isotonic { .. } => "isotonic",
        }
    }

    /// A Platt fit with negative slope reverses the score order; reports
    /// flag it so consumers know the map is not order-preserving.
    pub fn is_inverted(&self) -> bool {
        matches!(self, Calibrator::Platt { a, .. } if *a < 0.0)
    }
}

fn check_both_classes(labels: &[Label]) -> Result<()> {
    let pos = labels.iter().filter(|l| l.is_unsafe()).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::Calibration(
            "fitting needs both classes present in train".into(),
        ));
    }
    Ok(())
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Mean NLL of `sigmoid(z/t)` against the labels.
fn temperature_nll(logits: &[f64], labels: &[Label], t: f64) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, l)| {
            let scaled = z / t;
            if l.is_unsafe() {
                softplus(-scaled)
            } else {
                softplus(scaled)
            }
        })
        .sum();
    total / logits.len() as f64
}

/// Fit temperature scaling by 1-D golden-section search on log T over
/// [log 0.05, log 20], tolerance 1e-6 in log T.
pub fn fit_temperature(scores: &[f64], labels: &[Label], eps: f64) -> Result<Calibrator> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::InvalidInput("scores and labels must be non-empty and aligned".into()));
    }
    check_both_classes(labels)?;
    let logits: Vec<f64> = scores.iter().map(|&p| to_logit(p, eps)).collect();
    let f = |x: f64| temperature_nll(&logits, labels, x.exp());

    let (mut lo, mut hi) = (0.05f64.ln(), 20f64.ln());
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    let (mut best_x, mut best_f) = if fc <= fd { (c, fc) } else { (d, fd) };
    while hi - lo > 1e-6 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
        let (x, fx) = if fc <= fd { (c, fc) } else { (d, fd) };
        if fx < best_f {
            best_x = x;
            best_f = fx;
        }
    }
    Ok(Calibrator::Temperature { t: best_x.exp() })
}

/// Fit Platt scaling `sigmoid(a*z + b)` by ridge-stabilized Newton MLE.
///
/// Logits are centered internally for conditioning (the returned `b` folds
/// the centering back in), the ridge is 1e-8 on both parameters, and
/// convergence requires gradient norm <= 1e-10 within 100 iterations.
pub fn fit_platt(scores: &[f64], labels: &[Label], eps: f64) -> Result<Calibrator> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::InvalidInput("scores and labels must be non-empty and aligned".into()));
    }
    check_both_classes(labels)?;
    const RIDGE: f64 = 1e-8;
    const MAX_ITER: usize = 100;
    const GRAD_TOL: f64 = 1e-10;

    let n = scores.len() as f64;
    let logits: Vec<f64> = scores.iter().map(|&p| to_logit(p, eps)).collect();
    let z_bar = logits.iter().sum::<f64>() / n;
    let zc: Vec<f64> = logits.iter().map(|&z| z - z_bar).collect();
    let ys: Vec<f64> = labels.iter().map(|l| l.indicator()).collect();

    let objective = |a: f64, b: f64| -> f64 {
        let data: f64 = zc
            .iter()
            .zip(&ys)
            .map(|(&z, &y)| {
                let t = a * z + b;
                y * softplus(-t) + (1.0 - y) * softplus(t)
            })
            .sum();
        data / n + 0.5 * RIDGE * (a * a + b * b)
    };

    let (mut a, mut b) = (1.0f64, 0.0f64);
    let mut obj = objective(a, b);
    for iter in 0..MAX_ITER {
        let (mut ga, mut gb) = (0.0, 0.0);
        let (mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0);
        for (&z, &y) in zc.iter().zip(&ys) {
            let p = sigmoid(a * z + b);
            let r = p - y;
            let s = p * (1.0 - p);
            ga += r * z;
            gb += r;
            haa += s * z * z;
            hab += s * z;
            hbb += s;
        }
        ga = ga / n + RIDGE * a;
        gb = gb / n + RIDGE * b;
        haa = haa / n + RIDGE;
        hab /= n;
        hbb = hbb / n + RIDGE;

        if (ga * ga + gb * gb).sqrt() <= GRAD_TOL {
            return Ok(Calibrator::Platt { a, b: b - a * z_bar });
        }

        let det = haa * hbb - hab * hab;
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::Calibration(format!(
                "Platt Hessian not positive definite at iteration {iter}"
            )));
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;

        // Backtrack until the Newton step decreases the objective.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let (na, nb) = (a - step * da, b - step * db);
            let nobj = objective(na, nb);
            if nobj <= obj {
                a = na;
                b = nb;
                obj = nobj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::Calibration(format!(
                "Platt line search stalled at iteration {iter}"
            )));
        }
    }
    Err(Error::Calibration(format!(
        "Platt MLE did not reach gradient norm {GRAD_TOL} in {MAX_ITER} iterations"
    )))
}

/// Fit isotonic regression by pool-adjacent-violators on samples sorted by
/// score; tied scores are merged into one block up front. The result is a
/// left-continuous step function clamped to the end values out of range.
pub fn fit_isotonic(scores: &[f64], labels: &[Label]) -> Result<Calibrator> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::InvalidInput("scores and labels must be non-empty and aligned".into()));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // (score, target sum, count) per distinct score.
    let mut groups: Vec<(f64, f64, usize)> = Vec::new();
    for &idx in &order {
        let y = labels[idx].indicator();
        match groups.last_mut() {
            Some(g) if g.0 == scores[idx] => {
                g.1 += y;
                g.2 += 1;
            }
            _ => groups.push((scores[idx], y, 1)),
        }
    }

    // PAVA: merge while the trailing block means violate monotonicity.
    // Each block covers groups[start..] up to the next block's start.
    let mut blocks: Vec<(usize, f64, usize)> = Vec::new(); // (first group, sum, count)
    for (gi, &(_, sum, count)) in groups.iter().enumerate() {
        blocks.push((gi, sum, count));
        while blocks.len() >= 2 {
            let last = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if last.1 / (last.2 as f64) < prev.1 / prev.2 as f64 {
                blocks.pop();
                blocks.pop();
                blocks.push((prev.0, prev.1 + last.1, prev.2 + last.2));
            } else {
                break;
            }
        }
    }

    let mut knots = Vec::with_capacity(groups.len());
    let mut values = Vec::with_capacity(groups.len());
    for (bi, &(start, sum, count)) in blocks.iter().enumerate() {
        let end = blocks.get(bi + 1).map_or(groups.len(), |b| b.0);
        let v = (sum / count as f64).clamp(0.0, 1.0);
        for g in &groups[start..end] {
            knots.push(g.0);
            values.push(v);
        }
    }
    Ok(Calibrator::Isotonic { knots, values })
}

/// Apply a fitted calibrator elementwise; the input is never mutated.
pub fn apply_calibrator(cal: &Calibrator, scores: &[f64], eps: f64) -> Vec<f64> {
    scores
        .iter()
        .map(|&p| {
            let out = match cal {
                Calibrator::Temperature { t } => sigmoid(to_logit(p, eps) / t),
                Calibrator::Platt { a, b } => sigmoid(a * to_logit(p, eps) + b),
                Calibrator::Isotonic { knots, values } => {
                    if knots.is_empty() {
                        p
                    } else {
                        let idx = knots.partition_point(|&k| k < p);
                        if idx >= values.len() {
                            values[values.len() - 1]
                        } else {
                            values[idx]
                        }
                    }
                }
            };
            out.clamp(0.0, 1.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PromptFamily, PromptMeta};
    use crate::metrics::auroc;

    const EPS: f64 = 1e-12;

    fn labels(tags: &str) -> Vec<Label> {
        tags.chars()
            .map(|c| if c == 'U' { Label::Unsafe } else { Label::Safe })
            .collect()
    }

    fn train_matrix(cols: &[Vec<f64>], ls: &str) -> PromptScoreMatrix {
        let k = cols.len();
        let n = cols[0].len();
        let mut p_unsafe = Vec::with_capacity(n * k);
        for i in 0..n {
            for col in cols {
                p_unsafe.push(col[i]);
            }
        }
        PromptScoreMatrix::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            vec!["d".into(); n],
            labels(ls),
            vec![Split::Train; n],
            (1..=k as u32)
                .map(|id| PromptMeta { prompt_id: id, family: PromptFamily::A })
                .collect(),
            p_unsafe,
        )
        .unwrap()
    }

    #[test]
    fn select_distinct_nll_single_stage() {
        let m = train_matrix(
            &[vec![0.6, 0.4, 0.6], vec![0.9, 0.1, 0.9], vec![0.2, 0.9, 0.3]],
            "USU",
        );
        let r = select_prompt(&m, EPS, 0.5).unwrap();
        assert_eq!(r.selected_prompt_id, 2);
        assert_eq!(r.criteria_trail.len(), 1);
        assert_eq!(r.criteria_trail[0].criterion, "nll");
        assert_eq!(r.criteria_trail[0].survivors, vec![2]);
    }

    #[test]
    fn select_breaks_exact_nll_tie_by_ece() {
        // Columns 2 and 3 have bitwise-equal NLL (commuted contributions:
        // -ln .75 and -ln .25 swap roles across the U/S pair) but different
        // 15-bin ECE; column 3's co-binned scores cancel and win.
        let col1 = vec![0.5, 0.5, 0.5];
        let col2 = vec![0.75, 0.75, 0.22];
        let col3 = vec![0.25, 0.25, 0.22];
        let m = train_matrix(&[col1, col2.clone(), col3.clone()], "USS");
        let ls = labels("USS");
        let nll2 = nll(&col2, &ls, None, EPS).unwrap();
        let nll3 = nll(&col3, &ls, None, EPS).unwrap();
        assert_eq!(nll2, nll3, "construction must give an exact tie");
        let ece2 = ece(&col2, &ls, EceSpec::equal_width(15), None).unwrap();
        let ece3 = ece(&col3, &ls, EceSpec::equal_width(15), None).unwrap();
        assert!(ece3 < ece2);

        let r = select_prompt(&m, EPS, 0.5).unwrap();
        assert_eq!(r.selected_prompt_id, 3);
        assert_eq!(r.criteria_trail.len(), 2);
        assert_eq!(r.criteria_trail[0].survivors, vec![2, 3]);
        assert_eq!(r.criteria_trail[1].criterion, "ece_w15");
    }

    #[test]
    fn select_identical_columns_falls_to_prompt_id() {
        let col = vec![0.7, 0.3, 0.6];
        let m = train_matrix(&[col.clone(), col.clone(), col], "USU");
        let r = select_prompt(&m, EPS, 0.5).unwrap();
        assert_eq!(r.selected_prompt_id, 1);
        let last = r.criteria_trail.last().unwrap();
        assert_eq!(last.criterion, "prompt_id");
        assert_eq!(last.survivors, vec![1]);
    }

    #[test]
    fn select_rejects_non_train_views() {
        let mut m = train_matrix(&[vec![0.5, 0.5]], "US");
        m = PromptScoreMatrix::new(
            m.sample_ids().to_vec(),
            m.datasets().to_vec(),
            m.labels().to_vec(),
            vec![Split::Test, Split::Train],
            m.prompts().to_vec(),
            (0..m.n_samples()).flat_map(|i| m.row(i).to_vec()).collect(),
        )
        .unwrap();
        assert!(select_prompt(&m, EPS, 0.5).is_err());
    }

    #[test]
    fn select_invariant_to_column_order() {
        let cols = [vec![0.9, 0.2, 0.7], vec![0.6, 0.35, 0.55], vec![0.3, 0.8, 0.4]];
        let m = train_matrix(cols.as_ref(), "USU");
        let want = select_prompt(&m, EPS, 0.5).unwrap().selected_prompt_id;

        // Permute columns but keep ids attached to their columns.
        let perm = [2usize, 0, 1];
        let n = 3;
        let cols_ref = &cols;
        let p_unsafe: Vec<f64> =
            (0..n).flat_map(|i| perm.iter().map(move |&c| cols_ref[c][i])).collect();
        let m2 = PromptScoreMatrix::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            vec!["d".into(); n],
            labels("USU"),
            vec![Split::Train; n],
            perm.iter()
                .map(|&c| PromptMeta { prompt_id: c as u32 + 1, family: PromptFamily::A })
                .collect(),
            p_unsafe,
        )
        .unwrap();
        assert_eq!(select_prompt(&m2, EPS, 0.5).unwrap().selected_prompt_id, want);
    }

    #[test]
    fn locked_random_is_deterministic() {
        assert_eq!(locked_random_prompt(42, 15), locked_random_prompt(42, 15));
        assert_eq!(locked_random_prompt(7, 1), 1);
        let id = locked_random_prompt(42, 15);
        assert!((1..=15).contains(&id));
    }

    #[test]
    fn locked_random_uniform_over_seeds() {
        let k = 15u32;
        let n = 1000;
        let mut counts = vec![0usize; k as usize];
        for seed in 0..n {
            counts[(locked_random_prompt(seed, k) - 1) as usize] += 1;
        }
        let p = 1.0 / k as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!(
                (freq - p).abs() <= 3.0 * sigma,
                "prompt {} frequency {} outside 3 sigma of {}",
                i + 1,
                freq,
                p
            );
        }
    }

    #[test]
    fn temperature_one_is_identity() {
        let cal = Calibrator::Temperature { t: 1.0 };
        let scores = [0.01, 0.2, 0.5, 0.77, 0.99];
        let out = apply_calibrator(&cal, &scores, EPS);
        for (a, b) in scores.iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fitted_temperature_never_worse_than_identity() {
        let scores: Vec<f64> = (0..200).map(|i| sigmoid((i as f64 - 100.0) / 25.0)).collect();
        let ls: Vec<Label> = (0..200)
            .map(|i| if (i * 13) % 7 < 3 || i > 120 { Label::Unsafe } else { Label::Safe })
            .collect();
        let cal = fit_temperature(&scores, &ls, EPS).unwrap();
        let Calibrator::Temperature { t } = cal else { panic!() };
        let zs: Vec<f64> = scores.iter().map(|&p| to_logit(p, EPS)).collect();
        assert!(temperature_nll(&zs, &ls, t) <= temperature_nll(&zs, &ls, 1.0) + 1e-9);
    }

    #[test]
    fn temperature_requires_both_classes() {
        assert!(matches!(
            fit_temperature(&[0.2, 0.8], &labels("UU"), EPS),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn platt_identity_map_applies_cleanly() {
        let cal = Calibrator::Platt { a: 1.0, b: 0.0 };
        let scores = [0.05, 0.3, 0.5, 0.9];
        let out = apply_calibrator(&cal, &scores, EPS);
        for (a, b) in scores.iter().zip(&out) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn platt_flipped_labels_gives_negative_slope() {
        let n = 400;
        let scores: Vec<f64> = (0..n).map(|i| sigmoid((i as f64 - 200.0) / 40.0)).collect();
        // Labels anti-correlated with the scores.
        let ls: Vec<Label> = scores
            .iter()
            .map(|&p| if p < 0.5 { Label::Unsafe } else { Label::Safe })
            .collect();
        let cal = fit_platt(&scores, &ls, EPS).unwrap();
        let Calibrator::Platt { a, .. } = cal else { panic!() };
        assert!(a < 0.0, "a = {a}");
        assert!(cal.is_inverted());
    }

    #[test]
    fn platt_constant_column_recovers_base_rate() {
        let scores = vec![0.7; 500];
        let ls: Vec<Label> = (0..500)
            .map(|i: usize| if i.is_multiple_of(5) { Label::Unsafe } else { Label::Safe })
            .collect();
        let cal = fit_platt(&scores, &ls, EPS).unwrap();
        let Calibrator::Platt { a, b } = cal else { panic!() };
        assert!(a.abs() < 1e-6, "a = {a}");
        assert!((sigmoid(b) - 0.2).abs() < 1e-3, "sigmoid(b) = {}", sigmoid(b));
    }

    #[test]
    fn isotonic_already_monotone_is_identity_fit() {
        let cal = fit_isotonic(&[0.1, 0.3, 0.4, 0.9], &labels("SSUU")).unwrap();
        let Calibrator::Isotonic { ref values, .. } = cal else { panic!() };
        assert_eq!(values, &vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn isotonic_pools_single_violating_block() {
        let cal = fit_isotonic(&[0.2, 0.8], &labels("US")).unwrap();
        let out = apply_calibrator(&cal, &[0.2, 0.8], EPS);
        assert_eq!(out, vec![0.5, 0.5]);
    }

    #[test]
    fn isotonic_merges_tied_scores() {
        let cal = fit_isotonic(&[0.4, 0.4, 0.9], &labels("USU")).unwrap();
        let Calibrator::Isotonic { knots, values } = &cal else { panic!() };
        assert_eq!(knots, &vec![0.4, 0.9]);
        assert_eq!(values, &vec![0.5, 1.0]);
    }

    #[test]
    fn isotonic_clamps_out_of_range_and_steps_left_continuously() {
        let cal = fit_isotonic(&[0.2, 0.6], &labels("SU")).unwrap();
        let out = apply_calibrator(&cal, &[0.0, 0.2, 0.4, 0.6, 1.0], EPS);
        assert_eq!(out, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn isotonic_single_block_is_constant() {
        let cal = Calibrator::Isotonic { knots: vec![0.5], values: vec![0.4] };
        let out = apply_calibrator(&cal, &[0.0, 0.5, 0.9], EPS);
        assert_eq!(out, vec![0.4, 0.4, 0.4]);
    }

    #[test]
    fn calibrators_are_nondecreasing() {
        let scores: Vec<f64> = (0..60).map(|i| (i as f64 * 37.0 % 60.0) / 60.0).collect();
        let ls: Vec<Label> = (0..60)
            .map(|i| if (i * 11) % 3 == 0 { Label::Safe } else { Label::Unsafe })
            .collect();
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        for cal in [
            fit_temperature(&scores, &ls, EPS).unwrap(),
            fit_platt(&scores, &ls, EPS).unwrap(),
            fit_isotonic(&scores, &ls).unwrap(),
        ] {
            if cal.is_inverted() {
                continue;
            }
            let out = apply_calibrator(&cal, &grid, EPS);
            for w in out.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "{} not monotone", cal.kind());
            }
        }
    }

    #[test]
    fn strictly_increasing_calibration_preserves_auroc() {
        let scores: Vec<f64> = (0..80).map(|i| ((i * 29) % 80) as f64 / 80.0 + 0.001).collect();
        let ls: Vec<Label> = scores
            .iter()
            .enumerate()
            .map(|(i, &p)| if p > 0.5 || i % 7 == 0 { Label::Unsafe } else { Label::Safe })
            .collect();
        let before = auroc(&scores, &ls, None).unwrap();
        for cal in [
            Calibrator::Temperature { t: 2.7 },
            Calibrator::Platt { a: 1.4, b: -0.3 },
        ] {
            let out = apply_calibrator(&cal, &scores, EPS);
            let after = auroc(&out, &ls, None).unwrap();
            assert!((before - after).abs() < 1e-12, "{}", cal.kind());
        }
    }

    #[test]
    fn calibrator_json_shapes() {
        let t = serde_json::to_string(&Calibrator::Temperature { t: 2.0 }).unwrap();
        assert_eq!(t, r#"{"kind":"temperature","T":2.0}"#);
        let p = serde_json::to_string(&Calibrator::Platt { a: 1.0, b: 0.5 }).unwrap();
        assert_eq!(p, r#"{"kind":"platt","a":1.0,"b":0.5}"#);
        let iso = serde_json::to_string(&Calibrator::Isotonic {
            knots: vec![0.2],
            values: vec![0.5],
        })
        .unwrap();
        assert_eq!(iso, r#"{"kind":"isotonic","knots":[0.2],"values":[0.5]}"#);
        for s in [&t, &p, &iso] {
            let _: Calibrator = serde_json::from_str(s).unwrap();
        }
    }
}
