//! Cross-module checks: library metrics against independent brute-force
//! oracles, the Jensen relation between ensemble and per-prompt NLL, and
//! weighted/unweighted path agreement.

use enscore::aggregate::{aggregate_transductive, AggregationRule};
use enscore::calibrate::{apply_calibrator, fit_isotonic};
use enscore::metrics::{auprc, auroc, nll, EvalReport};
use enscore::protocol::{bootstrap_delta, BootstrapMetric};
use enscore::rng::Pcg32;
use enscore::synth::{generate, oracle_auroc, oracle_isotonic, SynthConfig};
use enscore::Label;

const EPS: f64 = 1e-12;

fn random_instance(rng: &mut Pcg32, n: usize, tie_grid: u32) -> (Vec<f64>, Vec<Label>) {
    let scores: Vec<f64> = (0..n)
        .map(|_| rng.below(tie_grid) as f64 / (tie_grid - 1) as f64)
        .collect();
    let labels: Vec<Label> = scores
        .iter()
        .map(|&p| {
            if rng.next_f64() < 0.3 + 0.4 * p {
                Label::Unsafe
            } else {
                Label::Safe
            }
        })
        .collect();
    (scores, labels)
}

fn both_classes(labels: &[Label]) -> bool {
    labels.iter().any(|l| l.is_unsafe()) && labels.iter().any(|l| !l.is_unsafe())
}

#[test]
fn auroc_matches_pairwise_oracle() {
    let mut rng = Pcg32::new(101, 0);
    let mut checked = 0;
    while checked < 200 {
        let n = 2 + rng.below(299) as usize;
        let (scores, labels) = random_instance(&mut rng, n, 25);
        if !both_classes(&labels) {
            continue;
        }
        let fast = auroc(&scores, &labels, None).unwrap();
        let slow = oracle_auroc(&scores, &labels).unwrap();
        assert!((fast - slow).abs() < 1e-12, "n={n} fast={fast} slow={slow}");
        checked += 1;
    }
}

#[test]
fn weighted_auroc_matches_weighted_pairwise_oracle() {
    // Independent O(N^2) oracle over weight-mass pairs, test-local.
    fn mass_oracle(scores: &[f64], labels: &[Label], w: &[f64]) -> f64 {
        let mut credit = 0.0;
        let (mut wp, mut wn) = (0.0, 0.0);
        for i in 0..scores.len() {
            if !labels[i].is_unsafe() {
                continue;
            }
            wp += w[i];
            for j in 0..scores.len() {
                if labels[j].is_unsafe() {
                    continue;
                }
                let c = if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
                credit += w[i] * w[j] * c;
            }
        }
        for j in 0..scores.len() {
            if !labels[j].is_unsafe() {
                wn += w[j];
            }
        }
        credit / (wp * wn)
    }

    let mut rng = Pcg32::new(202, 0);
    let mut checked = 0;
    while checked < 100 {
        let n = 2 + rng.below(120) as usize;
        let (scores, labels) = random_instance(&mut rng, n, 12);
        if !both_classes(&labels) {
            continue;
        }
        let weights: Vec<f64> = (0..n).map(|_| 0.1 + 2.0 * rng.next_f64()).collect();
        let fast = auroc(&scores, &labels, Some(&weights)).unwrap();
        let slow = mass_oracle(&scores, &labels, &weights);
        assert!((fast - slow).abs() < 1e-10, "n={n}");
        checked += 1;
    }
}

#[test]
fn auprc_matches_threshold_enumeration_oracle() {
    // Independent route: enumerate every distinct score as a threshold and
    // accumulate (recall step) x (precision at threshold).
    fn threshold_oracle(scores: &[f64], labels: &[Label]) -> f64 {
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        thresholds.reverse();
        let total_pos = labels.iter().filter(|l| l.is_unsafe()).count() as f64;
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for &t in &thresholds {
            let retrieved: Vec<usize> =
                (0..scores.len()).filter(|&i| scores[i] >= t).collect();
            let tp = retrieved.iter().filter(|&&i| labels[i].is_unsafe()).count() as f64;
            let precision = tp / retrieved.len() as f64;
            let recall = tp / total_pos;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        ap
    }

    let mut rng = Pcg32::new(303, 0);
    let mut checked = 0;
    while checked < 200 {
        let n = 1 + rng.below(300) as usize;
        let (scores, labels) = random_instance(&mut rng, n, 20);
        if !labels.iter().any(|l| l.is_unsafe()) {
            continue;
        }
        let fast = auprc(&scores, &labels, None).unwrap();
        let slow = threshold_oracle(&scores, &labels);
        assert!((fast - slow).abs() < 1e-12, "n={n} fast={fast} slow={slow}");
        checked += 1;
    }
}

#[test]
fn pava_matches_exhaustive_oracle() {
    let mut rng = Pcg32::new(404, 0);
    for _ in 0..300 {
        let n = 1 + rng.below(8) as usize;
        // Coarse grid to provoke tied scores.
        let scores: Vec<f64> = (0..n).map(|_| rng.below(5) as f64 / 4.0).collect();
        let labels: Vec<Label> = (0..n)
            .map(|_| if rng.next_f64() < 0.5 { Label::Unsafe } else { Label::Safe })
            .collect();
        let cal = fit_isotonic(&scores, &labels).unwrap();
        let fitted = apply_calibrator(&cal, &scores, EPS);
        let oracle = oracle_isotonic(&scores, &labels).unwrap();
        for i in 0..n {
            assert!(
                (fitted[i] - oracle[i]).abs() < 1e-9,
                "n={n} i={i} scores={scores:?} labels={labels:?}"
            );
        }
    }
}

#[test]
fn mean_ensemble_nll_dominates_mean_of_prompt_nlls() {
    for seed in 0..20 {
        let m = generate(&SynthConfig {
            n_samples: 300,
            k_prompts: 7,
            latent_logit_std: 1.2,
            per_prompt_bias_std: 0.8,
            per_prompt_scale_range: (0.6, 1.8),
            noise_std: 0.4,
            seed,
        })
        .unwrap();
        let mean_scores = aggregate_transductive(&m, &AggregationRule::MeanProb, EPS).unwrap();
        let ensemble = nll(&mean_scores, m.labels(), None, EPS).unwrap();
        let per_prompt: f64 = (0..m.n_prompts())
            .map(|k| nll(&m.column(k), m.labels(), None, EPS).unwrap())
            .sum::<f64>()
            / m.n_prompts() as f64;
        assert!(
            ensemble <= per_prompt + 1e-12,
            "seed {seed}: {ensemble} > {per_prompt}"
        );
        // With corruption the inequality is strict and visibly so.
        assert!(ensemble < per_prompt - 1e-6, "seed {seed}");
    }
}

#[test]
fn uniform_weights_agree_across_full_report() {
    let mut rng = Pcg32::new(505, 0);
    let (scores, labels) = random_instance(&mut rng, 200, 40);
    let uniform = vec![1.0; 200];
    let a = EvalReport::compute(&scores, &labels, None, EPS, 0.5).unwrap();
    let b = EvalReport::compute(&scores, &labels, Some(&uniform), EPS, 0.5).unwrap();
    assert!((a.nll - b.nll).abs() < 1e-12);
    assert_eq!(a.error_at_threshold, b.error_at_threshold);
    for (k, v) in &a.ece {
        assert!((v - b.ece[k]).abs() < 1e-12, "{k}");
    }
    match (a.auroc, b.auroc) {
        (Some(x), Some(y)) => assert!((x - y).abs() < 1e-12),
        other => panic!("auroc mismatch: {other:?}"),
    }
    match (a.auprc, b.auprc) {
        (Some(x), Some(y)) => assert!((x - y).abs() < 1e-12),
        other => panic!("auprc mismatch: {other:?}"),
    }
}

#[test]
fn bootstrap_ci_contains_point_delta_on_typical_instances() {
    let mut rng = Pcg32::new(606, 0);
    let mut contained = 0;
    let total = 40;
    for _ in 0..total {
        let n = 100;
        let (baseline, labels) = random_instance(&mut rng, n, 30);
        // Candidate nudges scores toward the labels.
        let candidate: Vec<f64> = baseline
            .iter()
            .zip(&labels)
            .map(|(&p, l)| 0.8 * p + 0.2 * l.indicator())
            .collect();
        let r = bootstrap_delta(
            &baseline,
            &candidate,
            &labels,
            BootstrapMetric::Nll,
            1000,
            rng.next_u64(),
            EPS,
        )
        .unwrap();
        if r.ci_low <= r.point_delta && r.point_delta <= r.ci_high {
            contained += 1;
        }
    }
    assert!(contained >= total - 1, "CI contained point delta in {contained}/{total}");
}
