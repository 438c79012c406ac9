//! End-to-end pipeline and report bundle assembly.
//!
//! `run_pipeline` executes: ingest -> select (train) -> aggregate ->
//! calibrate (train) -> metrics per method -> fragility -> selective ->
//! bootstrap -> prevalence, collecting every result into named tables.
//! Stages are individually skippable; a stage that fails records a gap
//! marker and its dependents are skipped, so a partial bundle is still
//! emitted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use enscore::aggregate::{aggregate_transductive, top_k_mean, AggregationRule};
use enscore::calibrate::{
    apply_calibrator, fit_isotonic, fit_platt, fit_temperature, locked_random_prompt,
    select_prompt, Calibrator, SelectionResult,
};
use enscore::metrics::{
    decile_gaps, ece, equal_width_bin, fragility_profile, nll, EceSpec, EvalReport, FragilityStat,
};
use enscore::protocol::{
    aurc, bootstrap_delta, prevalence_stress, risk_coverage, sweep_rules, uncertainty,
    BootstrapMetric, BootstrapResult, CoverageCurve, RetainedMetric, UncertaintyKind,
};
use enscore::{Error, Label, PromptScoreMatrix, Result, Split};

use crate::config::RunConfig;
use crate::table::{Cell, Table};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identity and shape of one ingested input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputMeta {
    pub model: String,
    pub dataset: String,
    pub n_total: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub k_prompts: usize,
    pub lock_source: Option<String>,
}

/// A stage that did not produce results, and why.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageGap {
    pub stage: String,
    pub reason: String,
    /// False when the stage was skipped by configuration.
    pub error: bool,
    /// For error gaps: true when the cause was bad input rather than a
    /// computation that could not proceed. Drives the CLI exit code.
    #[serde(default)]
    pub validation: bool,
}

/// Fixed identifiers of every randomized component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrngMetadata {
    pub generator: String,
    pub random_baseline: String,
    pub bootstrap_derivation: String,
}

impl Default for PrngMetadata {
    fn default() -> Self {
        PrngMetadata {
            generator: "pcg32-xsh-rr-64/32".into(),
            random_baseline: "stream 0, single draw, id = 1 + (u32 mod K)".into(),
            bootstrap_derivation:
                "per-resample pcg32(state=splitmix64(seed xor splitmix64(index+1)), stream=index)"
                    .into(),
        }
    }
}

/// The numeric conventions this artifact fixes where the protocol leaves
/// room; embedded in every bundle so cross-implementation comparisons are
/// interpretable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignFlags {
    pub entropy_weight_base: String,
    pub std_convention: String,
    pub retention_rounding: String,
    pub percentile_method: String,
    pub prevalence_weights: String,
    pub selection_tie_policy: String,
    pub delta_convention: String,
    pub calibrator_transform: String,
    pub sigma_floor: f64,
    pub logit_clip_epsilon: f64,
}

impl DesignFlags {
    fn new(eps: f64) -> Self {
        DesignFlags {
            entropy_weight_base: "2".into(),
            std_convention: "population".into(),
            retention_rounding: "half_up".into(),
            percentile_method: "linear_between_order_statistics".into(),
            prevalence_weights: "fixed_from_full_sample".into(),
            selection_tie_policy: "exact_equality".into(),
            delta_convention: "baseline_minus_candidate".into(),
            calibrator_transform: "clipped_logit".into(),
            sigma_floor: enscore::aggregate::SIGMA_FLOOR,
            logit_clip_epsilon: eps,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub inputs: Vec<InputMeta>,
    pub prng: PrngMetadata,
    pub flags: DesignFlags,
    pub gaps: Vec<StageGap>,
}

/// Everything a run produces: metadata plus named tables. Serializable as
/// one JSON document and re-renderable without recomputation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metadata: RunMetadata,
    pub tables: Vec<Table>,
}

impl ReportBundle {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn has_error_gaps(&self) -> bool {
        self.metadata.gaps.iter().any(|g| g.error)
    }
}

/// Per-bin reliability statistics; empty bins are omitted.
pub fn reliability_bins(
    scores: &[f64],
    labels: &[Label],
    spec: EceSpec,
) -> Vec<(usize, f64, f64, f64)> {
    let n = scores.len();
    let mut w = vec![0.0; spec.bins];
    let mut conf = vec![0.0; spec.bins];
    let mut freq = vec![0.0; spec.bins];
    for (i, &p) in scores.iter().enumerate() {
        let b = equal_width_bin(p, spec.bins);
        w[b] += 1.0;
        conf[b] += p;
        freq[b] += labels[i].indicator();
    }
    (0..spec.bins)
        .filter(|&b| w[b] > 0.0)
        .map(|b| (b, conf[b] / w[b], freq[b] / w[b], w[b] / n as f64))
        .collect()
}

/// Evaluation view of one input under the configured eval split.
pub fn eval_view(matrix: &PromptScoreMatrix, eval_split: &str) -> Result<PromptScoreMatrix> {
    match eval_split {
        "train" => matrix.split_view(Split::Train),
        "test" => matrix.split_view(Split::Test),
        "external" => matrix.split_view(Split::External),
        "auto" => {
            if matrix.has_split(Split::Test) {
                matrix.split_view(Split::Test)
            } else if matrix.has_split(Split::External) {
                matrix.split_view(Split::External)
            } else {
                Ok(matrix.clone())
            }
        }
        other => Err(Error::InvalidInput(format!("unknown eval split '{other}'"))),
    }
}

struct PreparedInput {
    model: String,
    dataset: String,
    full: PromptScoreMatrix,
    eval: PromptScoreMatrix,
    /// Train view that locks selection/calibration for this input, with
    /// the model name it came from.
    lock: Option<(String, PromptScoreMatrix)>,
}

/// Ordered per-input method scores on the eval view.
type MethodScores = Vec<(String, Vec<f64>)>;

pub struct PipelineOutput {
    pub bundle: ReportBundle,
}

fn selective_targets() -> Vec<(&'static str, RetainedMetric, SelectiveKind)> {
    vec![
        ("aurc_err_0.5_1.0", RetainedMetric::Error, SelectiveKind::Aurc(0.5, 1.0)),
        ("aurc_err_0.9_1.0", RetainedMetric::Error, SelectiveKind::Aurc(0.9, 1.0)),
        ("aurc_nll_0.9_1.0", RetainedMetric::Nll, SelectiveKind::Aurc(0.9, 1.0)),
        ("aurc_ece_0.9_1.0", RetainedMetric::Ece, SelectiveKind::Aurc(0.9, 1.0)),
        ("err_at_0.95", RetainedMetric::Error, SelectiveKind::At(0.95)),
        ("nll_at_0.95", RetainedMetric::Nll, SelectiveKind::At(0.95)),
        ("ece_at_0.95", RetainedMetric::Ece, SelectiveKind::At(0.95)),
        ("err_at_0.90", RetainedMetric::Error, SelectiveKind::At(0.90)),
        ("nll_at_0.90", RetainedMetric::Nll, SelectiveKind::At(0.90)),
        ("ece_at_0.90", RetainedMetric::Ece, SelectiveKind::At(0.90)),
    ]
}

enum SelectiveKind {
    Aurc(f64, f64),
    At(f64),
}

fn selective_value(
    curve: &CoverageCurve,
    metric: RetainedMetric,
    kind: &SelectiveKind,
) -> Result<f64> {
    match *kind {
        SelectiveKind::Aurc(lo, hi) => aurc(curve, metric, lo, hi),
        SelectiveKind::At(c) => {
            let p = curve
                .points
                .iter()
                .find(|p| (p.coverage - c).abs() <= 1e-12)
                .ok_or_else(|| {
                    Error::InvalidInput(format!("coverage {c} not on the evaluated grid"))
                })?;
            Ok(match metric {
                RetainedMetric::Error => p.error,
                RetainedMetric::Nll => p.nll,
                RetainedMetric::Ece => p.ece,
            })
        }
    }
}

/// Run the full protocol over the ingested inputs.
pub fn run_pipeline(
    inputs: Vec<(String, PromptScoreMatrix)>,
    config: &RunConfig,
) -> Result<PipelineOutput> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::InvalidInput("run needs at least one --input artifact".into()));
    }
    let eps = config.protocol.epsilon;
    let threshold = config.protocol.threshold;
    let mut gaps: Vec<StageGap> = Vec::new();
    let mut tables: Vec<Table> = Vec::new();

    fn skip(gaps: &mut Vec<StageGap>, stage: &str, reason: String, error: bool) {
        gaps.push(StageGap { stage: stage.into(), reason, error, validation: true });
    }

    fn skip_err(gaps: &mut Vec<StageGap>, stage: &str, context: String, e: &Error) {
        gaps.push(StageGap {
            stage: stage.into(),
            reason: format!("{context}: {e}"),
            error: true,
            validation: e.is_validation(),
        });
    }

    // -- ingest ------------------------------------------------------------
    let default_lock: Option<String> = match &config.lock_input {
        Some(name) => {
            let found = inputs.iter().any(|(m, x)| m == name && x.has_split(Split::Train));
            if !found {
                return Err(Error::InvalidInput(format!(
                    "lock_input '{name}' is not an ingested input with train rows"
                )));
            }
            Some(name.clone())
        }
        None => inputs
            .iter()
            .find(|(_, m)| m.has_split(Split::Train))
            .map(|(name, _)| name.clone()),
    };

    let mut prepared: Vec<PreparedInput> = Vec::new();
    for (model, full) in &inputs {
        let dataset = full.datasets().first().cloned().unwrap_or_default();
        let eval = eval_view(full, &config.eval_split)?;
        let lock = if full.has_split(Split::Train) {
            Some((model.clone(), full.split_view(Split::Train)?))
        } else if let Some(source) = &default_lock {
            let (_, source_matrix) = inputs.iter().find(|(m, _)| m == source).unwrap();
            let source_train = source_matrix.split_view(Split::Train)?;
            if source_train.prompts() != full.prompts() {
                return Err(Error::InvalidInput(format!(
                    "input '{model}' cannot inherit the lock from '{source}': prompt sets differ"
                )));
            }
            Some((source.clone(), source_train))
        } else {
            None
        };
        prepared.push(PreparedInput {
            model: model.clone(),
            dataset,
            full: full.clone(),
            eval,
            lock,
        });
    }

    // -- select ------------------------------------------------------------
    let mut selections: BTreeMap<String, SelectionResult> = BTreeMap::new();
    if !config.stages.select {
        skip(&mut gaps, "select", "skipped by config".into(), false);
    } else {
        let mut table = Table::new(
            "selection",
            &["dataset", "model", "selected_prompt", "trail", "random_seed", "random_prompt"],
        );
        for p in &prepared {
            let Some((_, lock_train)) = &p.lock else {
                skip(
                    &mut gaps,
                    "select",
                    format!(
                        "input '{}' has no train rows and no lock source; selection requires a train split",
                        p.model
                    ),
                    true,
                );
                continue;
            };
            match select_prompt(lock_train, eps, threshold) {
                Ok(sel) => {
                    let trail: Vec<String> = sel
                        .criteria_trail
                        .iter()
                        .map(|s| {
                            let ids: Vec<String> =
                                s.survivors.iter().map(|i| i.to_string()).collect();
                            format!("{}:{}", s.criterion, ids.join(","))
                        })
                        .collect();
                    // Draw an index so family-restricted views (whose
                    // prompt ids are not 1..K) keep working.
                    let draw =
                        locked_random_prompt(config.random_baseline_seed, p.eval.n_prompts() as u32);
                    let rand_id = p.eval.prompts()[draw as usize - 1].prompt_id;
                    table.push(vec![
                        p.dataset.as_str().into(),
                        p.model.as_str().into(),
                        (sel.selected_prompt_id as usize).into(),
                        trail.join(" > ").into(),
                        (config.random_baseline_seed as i64).into(),
                        (rand_id as usize).into(),
                    ]);
                    selections.insert(p.model.clone(), sel);
                }
                Err(e) => skip_err(&mut gaps, "select", format!("input '{}'", p.model), &e),
            }
        }
        tables.push(table);
    }

    // -- aggregate + calibrate: build per-input method scores ---------------
    let rules = AggregationRule::standard_sweep(
        config.protocol.trim_fraction,
        &config.protocol.shrink_alphas,
    );
    let mut methods_per_input: Vec<MethodScores> = Vec::new();
    let mut calibrator_table = Table::new(
        "calibrators",
        &["dataset", "model", "method", "base", "parameters", "inverted"],
    );
    for p in &prepared {
        let mut methods: MethodScores = Vec::new();
        let selected_col = selections.get(&p.model).map(|sel| {
            let idx = p
                .eval
                .prompt_index(sel.selected_prompt_id)
                .expect("selected prompt exists in the shared prompt set");
            p.eval.column(idx)
        });
        if let Some(col) = &selected_col {
            methods.push(("selected".into(), col.clone()));
        }
        if config.stages.select {
            let draw =
                locked_random_prompt(config.random_baseline_seed, p.eval.n_prompts() as u32);
            methods.push(("random".into(), p.eval.column(draw as usize - 1)));
        }

        let mut mean_scores: Option<Vec<f64>> = None;
        if !config.stages.aggregate {
            if methods_per_input.is_empty() {
                skip(&mut gaps, "aggregate", "skipped by config".into(), false);
            }
        } else {
            for rule in &rules {
                match aggregate_transductive(&p.eval, rule, eps) {
                    Ok(scores) => {
                        if *rule == AggregationRule::MeanProb {
                            mean_scores = Some(scores.clone());
                        }
                        methods.push((rule.to_string(), scores));
                    }
                    Err(e) => skip_err(
                        &mut gaps,
                        "aggregate",
                        format!("input '{}' rule '{rule}'", p.model),
                        &e,
                    ),
                }
            }
        }

        if !config.stages.calibrate {
            if methods_per_input.is_empty() {
                skip(&mut gaps, "calibrate", "skipped by config".into(), false);
            }
        } else if let Some((lock_model, lock_train)) = &p.lock {
            let train_labels = lock_train.labels().to_vec();
            let mut bases: Vec<(&str, Vec<f64>, Vec<f64>)> = Vec::new(); // (base, train scores, eval scores)
            if let (Some(sel), Some(col)) = (selections.get(&p.model), &selected_col) {
                let idx = lock_train.prompt_index(sel.selected_prompt_id).unwrap();
                bases.push(("selected", lock_train.column(idx), col.clone()));
            }
            if let Some(mean_eval) = &mean_scores {
                match aggregate_transductive(lock_train, &AggregationRule::MeanProb, eps) {
                    Ok(train_mean) => bases.push(("mean", train_mean, mean_eval.clone())),
                    Err(e) => skip_err(
                        &mut gaps,
                        "calibrate",
                        format!("input '{}' train mean", p.model),
                        &e,
                    ),
                }
            }
            for (base, train_scores, eval_scores) in &bases {
                let fits: [(&str, Result<Calibrator>); 3] = [
                    ("ts", fit_temperature(train_scores, &train_labels, eps)),
                    ("platt", fit_platt(train_scores, &train_labels, eps)),
                    ("iso", fit_isotonic(train_scores, &train_labels)),
                ];
                for (kind, fit) in fits {
                    match fit {
                        Ok(cal) => {
                            calibrator_table.push(vec![
                                p.dataset.as_str().into(),
                                p.model.as_str().into(),
                                kind.into(),
                                (*base).into(),
                                serde_json::to_string(&cal)
                                    .expect("calibrator serializes")
                                    .into(),
                                if cal.is_inverted() { "yes".into() } else { "no".into() },
                            ]);
                            methods.push((
                                format!("{kind}_{base}"),
                                apply_calibrator(&cal, eval_scores, eps),
                            ));
                        }
                        Err(e) => skip_err(
                            &mut gaps,
                            "calibrate",
                            format!("input '{}' {kind} on {base} (lock '{lock_model}')", p.model),
                            &e,
                        ),
                    }
                }
            }
        } else {
            skip(
                &mut gaps,
                "calibrate",
                format!("input '{}' has no train rows and no lock source", p.model),
                true,
            );
        }
        methods_per_input.push(methods);
    }
    if config.stages.calibrate {
        tables.push(calibrator_table);
    }

    // -- metrics per method --------------------------------------------------
    let mut main = Table::new(
        "main_comparison",
        &[
            "dataset", "model", "method", "n", "nll", "ece_w10", "ece_w15", "ece_w20", "ece_m15",
            "auroc", "auprc", "err05",
        ],
    );
    for (p, methods) in prepared.iter().zip(&methods_per_input) {
        for (name, scores) in methods {
            let report = EvalReport::compute(scores, p.eval.labels(), None, eps, threshold)?;
            main.push(vec![
                p.dataset.as_str().into(),
                p.model.as_str().into(),
                name.as_str().into(),
                report.n.into(),
                report.nll.into(),
                report.ece["ece_w10"].into(),
                report.ece["ece_w15"].into(),
                report.ece["ece_w20"].into(),
                report.ece["ece_m15"].into(),
                Cell::opt_float(report.auroc),
                Cell::opt_float(report.auprc),
                report.error_at_threshold.into(),
            ]);
        }
    }
    tables.push(main);

    // Head-to-head of calibrated methods against the untreated mean.
    if config.stages.calibrate && config.stages.aggregate {
        let mut h2h = Table::new(
            "calibration_head_to_head",
            &["dataset", "model", "method", "delta_nll_vs_mean", "delta_ece_vs_mean"],
        );
        for (p, methods) in prepared.iter().zip(&methods_per_input) {
            let Some((_, mean_scores)) = methods.iter().find(|(n, _)| n == "mean_prob") else {
                continue;
            };
            let labels = p.eval.labels();
            let mean_nll = nll(mean_scores, labels, None, eps)?;
            let mean_ece = ece(mean_scores, labels, EceSpec::equal_width(15), None)?;
            for (name, scores) in methods {
                if !name.contains('_') || !(name.ends_with("_selected") || name.ends_with("_mean"))
                {
                    continue;
                }
                let m_nll = nll(scores, labels, None, eps)?;
                let m_ece = ece(scores, labels, EceSpec::equal_width(15), None)?;
                h2h.push(vec![
                    p.dataset.as_str().into(),
                    p.model.as_str().into(),
                    name.as_str().into(),
                    (mean_nll - m_nll).into(),
                    (mean_ece - m_ece).into(),
                ]);
            }
        }
        tables.push(h2h);
    }

    // -- fragility -----------------------------------------------------------
    if !config.stages.fragility {
        skip(&mut gaps, "fragility", "skipped by config".into(), false);
    } else {
        let mut deciles = Table::new(
            "fragility_deciles",
            &["dataset", "model", "decile", "mean_mistake", "mean_disagreement"],
        );
        let mut gaps_table = Table::new(
            "fragility_gaps",
            &[
                "dataset", "model", "d1_mistake", "d10_mistake", "mistake_gap", "d1_disagreement",
                "d10_disagreement", "disagreement_gap",
            ],
        );
        for p in &prepared {
            let profile = fragility_profile(&p.eval, threshold);
            match (
                decile_gaps(&profile, FragilityStat::Mistake),
                decile_gaps(&profile, FragilityStat::Disagreement),
            ) {
                (Ok(mg), Ok(dg)) => {
                    let summary = profile.decile_summary.as_ref().expect("N >= 10");
                    for d in 0..10 {
                        deciles.push(vec![
                            p.dataset.as_str().into(),
                            p.model.as_str().into(),
                            (d + 1).into(),
                            summary.mistake_by_decile[d].into(),
                            summary.disagreement_by_decile[d].into(),
                        ]);
                    }
                    gaps_table.push(vec![
                        p.dataset.as_str().into(),
                        p.model.as_str().into(),
                        mg.d1_mean.into(),
                        mg.d10_mean.into(),
                        mg.gap.into(),
                        dg.d1_mean.into(),
                        dg.d10_mean.into(),
                        dg.gap.into(),
                    ]);
                }
                (Err(e), _) | (_, Err(e)) => {
                    skip_err(&mut gaps, "fragility", format!("input '{}'", p.model), &e)
                }
            }
        }
        tables.push(deciles);
        tables.push(gaps_table);
    }

    // -- sweep ----------------------------------------------------------------
    if !config.stages.sweep {
        skip(&mut gaps, "sweep", "skipped by config".into(), false);
    } else {
        let pairs: Vec<(String, &PromptScoreMatrix)> = prepared
            .iter()
            .map(|p| (format!("{}/{}", p.dataset, p.model), &p.eval))
            .collect();
        match sweep_rules(&pairs, &rules, eps) {
            Ok(win_table) => {
                let mut t = Table::new(
                    "sweep_wins",
                    &["method", "nll_wins", "avg_rank", "pairs_evaluated"],
                );
                for i in 0..win_table.methods.len() {
                    t.push(vec![
                        win_table.methods[i].as_str().into(),
                        win_table.wins[i].into(),
                        win_table.avg_rank[i].into(),
                        win_table.pairs_evaluated.into(),
                    ]);
                }
                for (pair, reason) in &win_table.excluded {
                    skip(&mut gaps, "sweep", format!("pair '{pair}' excluded: {reason}"), true);
                }
                tables.push(t);
            }
            Err(e) => skip_err(&mut gaps, "sweep", "rule sweep".into(), &e),
        }
    }

    // -- top-k frontier ----------------------------------------------------
    if !config.stages.topk {
        skip(&mut gaps, "topk", "skipped by config".into(), false);
    } else {
        let mut t = Table::new("topk_frontier", &["dataset", "model", "k", "nll"]);
        for p in &prepared {
            let Some((_, lock_train)) = &p.lock else {
                skip(
                    &mut gaps,
                    "topk",
                    format!("input '{}' has no train rows for prompt ranking", p.model),
                    true,
                );
                continue;
            };
            // Rank prompts by train NLL ascending, ties by prompt id.
            let mut ranked: Vec<(f64, u32)> = Vec::new();
            for (idx, meta) in lock_train.prompts().iter().enumerate() {
                let v = nll(&lock_train.column(idx), lock_train.labels(), None, eps)?;
                ranked.push((v, meta.prompt_id));
            }
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let ranking: Vec<u32> = ranked.iter().map(|&(_, id)| id).collect();
            for k in 1..=ranking.len() {
                let scores = top_k_mean(&p.eval, &ranking, k)?;
                let v = nll(&scores, p.eval.labels(), None, eps)?;
                t.push(vec![
                    p.dataset.as_str().into(),
                    p.model.as_str().into(),
                    k.into(),
                    v.into(),
                ]);
            }
        }
        tables.push(t);
    }

    // -- selective prediction ------------------------------------------------
    if !config.stages.selective {
        skip(&mut gaps, "selective", "skipped by config".into(), false);
    } else {
        let mut curves_table = Table::new(
            "coverage_curves",
            &["dataset", "model", "signal", "coverage", "retained", "err", "nll", "ece"],
        );
        let mut values_table =
            Table::new("selective_values", &["dataset", "model", "signal", "target", "value"]);
        // per target: signal -> (best value per pair)
        let targets = selective_targets();
        let mut wins: BTreeMap<&'static str, BTreeMap<String, usize>> = BTreeMap::new();
        for (p, methods) in prepared.iter().zip(&methods_per_input) {
            let Some((_, mean_scores)) = methods.iter().find(|(n, _)| n == "mean_prob") else {
                skip(
                    &mut gaps,
                    "selective",
                    format!("input '{}': mean ensemble unavailable", p.model),
                    true,
                );
                continue;
            };
            let selected_id = selections.get(&p.model).map(|s| s.selected_prompt_id);
            let mut per_pair: BTreeMap<&'static str, Vec<(String, f64)>> = BTreeMap::new();
            for kind in [
                UncertaintyKind::StdPU,
                UncertaintyKind::EntropyMean,
                UncertaintyKind::MarginSingle,
            ] {
                if kind == UncertaintyKind::MarginSingle && selected_id.is_none() {
                    skip(
                        &mut gaps,
                        "selective",
                        format!("input '{}': margin_single needs the select stage", p.model),
                        true,
                    );
                    continue;
                }
                let signal = uncertainty(&p.eval, selected_id, kind)?;
                let curve = risk_coverage(
                    mean_scores,
                    p.eval.labels(),
                    &signal.values,
                    &config.protocol.coverage_grid,
                    eps,
                    threshold,
                )?;
                for pt in &curve.points {
                    curves_table.push(vec![
                        p.dataset.as_str().into(),
                        p.model.as_str().into(),
                        kind.to_string().into(),
                        pt.coverage.into(),
                        pt.retained.into(),
                        pt.error.into(),
                        pt.nll.into(),
                        pt.ece.into(),
                    ]);
                }
                for (target, metric, tk) in &targets {
                    match selective_value(&curve, *metric, tk) {
                        Ok(v) => {
                            values_table.push(vec![
                                p.dataset.as_str().into(),
                                p.model.as_str().into(),
                                kind.to_string().into(),
                                (*target).into(),
                                v.into(),
                            ]);
                            per_pair.entry(target).or_default().push((kind.to_string(), v));
                        }
                        Err(e) => skip_err(
                            &mut gaps,
                            "selective",
                            format!("input '{}' target '{target}'", p.model),
                            &e,
                        ),
                    }
                }
            }
            // Shared wins for the best (lowest) value per target.
            for (target, entries) in per_pair {
                let best = entries.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
                for (signal, v) in entries {
                    if v == best {
                        *wins.entry(target).or_default().entry(signal).or_insert(0) += 1;
                    }
                }
            }
        }
        let mut wins_table = Table::new("selective_wins", &["target", "signal", "wins"]);
        for (target, _, _) in &selective_targets() {
            if let Some(by_signal) = wins.get(target) {
                for (signal, count) in by_signal {
                    wins_table.push(vec![(*target).into(), signal.as_str().into(), (*count).into()]);
                }
            }
        }
        tables.push(curves_table);
        tables.push(values_table);
        tables.push(wins_table);
    }

    // -- bootstrap -------------------------------------------------------------
    let bootstrap_inputs: Vec<(usize, Vec<f64>, Vec<f64>)> = prepared
        .iter()
        .enumerate()
        .filter_map(|(i, _)| {
            let methods = &methods_per_input[i];
            let selected = methods.iter().find(|(n, _)| n == "selected")?.1.clone();
            let mean = methods.iter().find(|(n, _)| n == "mean_prob")?.1.clone();
            Some((i, selected, mean))
        })
        .collect();

    if !config.stages.bootstrap {
        skip(&mut gaps, "bootstrap", "skipped by config".into(), false);
    } else {
        let mut t = Table::new(
            "bootstrap_ci",
            &[
                "dataset", "model", "metric", "delta", "ci_low", "ci_high", "p_value", "b", "seed",
            ],
        );
        if bootstrap_inputs.is_empty() {
            skip(
                &mut gaps,
                "bootstrap",
                "needs both the selected baseline and the mean ensemble".into(),
                true,
            );
        }
        for (i, baseline, candidate) in &bootstrap_inputs {
            let p = &prepared[*i];
            for metric in [BootstrapMetric::Nll, BootstrapMetric::EceW15] {
                let r: BootstrapResult = bootstrap_delta(
                    baseline,
                    candidate,
                    p.eval.labels(),
                    metric,
                    config.protocol.bootstrap_b,
                    config.protocol.bootstrap_seed,
                    eps,
                )?;
                t.push(vec![
                    p.dataset.as_str().into(),
                    p.model.as_str().into(),
                    metric.as_str().into(),
                    r.point_delta.into(),
                    r.ci_low.into(),
                    r.ci_high.into(),
                    r.p_two_sided.into(),
                    r.b.into(),
                    (r.seed as i64).into(),
                ]);
            }
        }
        tables.push(t);
    }

    // -- prevalence stress -------------------------------------------------------
    if !config.stages.prevalence {
        skip(&mut gaps, "prevalence", "skipped by config".into(), false);
    } else {
        let mut t = Table::new(
            "prevalence_stress",
            &["dataset", "model", "target", "metric", "delta", "ci_low", "ci_high", "p_value"],
        );
        if bootstrap_inputs.is_empty() {
            skip(
                &mut gaps,
                "prevalence",
                "needs both the selected baseline and the mean ensemble".into(),
                true,
            );
        }
        for (i, baseline, candidate) in &bootstrap_inputs {
            let p = &prepared[*i];
            match prevalence_stress(
                baseline,
                candidate,
                p.eval.labels(),
                &config.protocol.prevalence_targets,
                config.protocol.bootstrap_b,
                config.protocol.bootstrap_seed,
                eps,
            ) {
                Ok(entries) => {
                    for e in entries {
                        for (metric, r) in [("nll", &e.nll), ("ece_w15", &e.ece)] {
                            let target_cell = match e.target {
                                enscore::PrevalenceTarget::Native => Cell::from("native"),
                                enscore::PrevalenceTarget::Rate(r) => Cell::Float(r),
                            };
                            t.push(vec![
                                p.dataset.as_str().into(),
                                p.model.as_str().into(),
                                target_cell,
                                metric.into(),
                                r.point_delta.into(),
                                r.ci_low.into(),
                                r.ci_high.into(),
                                r.p_two_sided.into(),
                            ]);
                        }
                    }
                }
                Err(e) => skip_err(&mut gaps, "prevalence", format!("input '{}'", p.model), &e),
            }
        }
        tables.push(t);
    }

    // -- reliability plot data ----------------------------------------------------
    let mut rel = Table::new(
        "reliability_bins",
        &["dataset", "model", "method", "bin", "conf", "freq", "mass"],
    );
    for (p, methods) in prepared.iter().zip(&methods_per_input) {
        for wanted in ["selected", "mean_prob"] {
            if let Some((_, scores)) = methods.iter().find(|(n, _)| n == wanted) {
                for (bin, conf, freq, mass) in reliability_bins(
                    scores,
                    p.eval.labels(),
                    EceSpec::equal_width(config.protocol.ece_bins_default),
                ) {
                    rel.push(vec![
                        p.dataset.as_str().into(),
                        p.model.as_str().into(),
                        wanted.into(),
                        bin.into(),
                        conf.into(),
                        freq.into(),
                        mass.into(),
                    ]);
                }
            }
        }
    }
    tables.push(rel);

    let metadata = RunMetadata {
        tool_version: TOOL_VERSION.to_string(),
        config: config.clone(),
        config_hash: config.hash(),
        inputs: prepared
            .iter()
            .map(|p| InputMeta {
                model: p.model.clone(),
                dataset: p.dataset.clone(),
                n_total: p.full.n_samples(),
                n_train: p
                    .full
                    .splits()
                    .iter()
                    .filter(|s| **s == Split::Train)
                    .count(),
                n_eval: p.eval.n_samples(),
                k_prompts: p.full.n_prompts(),
                lock_source: p.lock.as_ref().map(|(m, _)| m.clone()),
            })
            .collect(),
        prng: PrngMetadata::default(),
        flags: DesignFlags::new(eps),
        gaps,
    };

    Ok(PipelineOutput { bundle: ReportBundle { metadata, tables } })
}
