//! Score-matrix data model and JSONL ingestion.
//!
//! The universal input is an N×K matrix of unsafe probabilities: N samples,
//! each scored under K prompt templates. Records arrive as newline-delimited
//! JSON, one sample per line, carrying either probabilities directly or raw
//! two-label logits that are subset-normalized on ingest.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary safety label. `Unsafe` is the positive class (indicator 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Unsafe,
    Safe,
}

impl Label {
    pub fn indicator(self) -> f64 {
        match self {
            Label::Unsafe => 1.0,
            Label::Safe => 0.0,
        }
    }

    pub fn is_unsafe(self) -> bool {
        matches!(self, Label::Unsafe)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Unsafe => "U",
            Label::Safe => "S",
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        // "U"/"S" is the canonical wire form; 1/0 accepted for interop.
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Str(String),
            Int(i64),
        }
        match Wire::deserialize(de)? {
            Wire::Str(s) if s == "U" => Ok(Label::Unsafe),
            Wire::Str(s) if s == "S" => Ok(Label::Safe),
            Wire::Str(s) => Err(serde::de::Error::custom(format!(
                "label must be \"U\" or \"S\", got \"{s}\""
            ))),
            Wire::Int(1) => Ok(Label::Unsafe),
            Wire::Int(0) => Ok(Label::Safe),
            Wire::Int(i) => Err(serde::de::Error::custom(format!(
                "label must be 1 or 0, got {i}"
            ))),
        }
    }
}

/// Dataset split tag carried by every sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    External,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::External => "external",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "external" => Ok(Split::External),
            other => Err(Error::InvalidInput(format!(
                "unknown split '{other}' (expected train|test|external)"
            ))),
        }
    }
}

/// Prompt family tag. The reference protocol organizes 15 prompts into three
/// families of five; the library accepts any partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptFamily {
    A,
    B,
    C,
}

impl fmt::Display for PromptFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptFamily::A => "A",
            PromptFamily::B => "B",
            PromptFamily::C => "C",
        })
    }
}

impl std::str::FromStr for PromptFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(PromptFamily::A),
            "B" => Ok(PromptFamily::B),
            "C" => Ok(PromptFamily::C),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

/// Identity of one prompt template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMeta {
    pub prompt_id: u32,
    pub family: PromptFamily,
}

/// One raw first-token logit pair for the two label tokens.
#[derive(Debug, Clone, Copy)]
pub struct RawLogitRecord {
    pub logit_u: f64,
    pub logit_s: f64,
}

/// Softmax restricted to the two label tokens, in overflow-safe form.
///
/// Rejects non-finite logits; the caller attaches sample/prompt identity to
/// the error at the parse layer.
pub fn subset_normalize(rec: RawLogitRecord) -> Result<f64> {
    if !rec.logit_u.is_finite() || !rec.logit_s.is_finite() {
        return Err(Error::InvalidInput(format!(
            "non-finite logits (logit_u={}, logit_s={})",
            rec.logit_u, rec.logit_s
        )));
    }
    let m = rec.logit_u.max(rec.logit_s);
    let eu = (rec.logit_u - m).exp();
    let es = (rec.logit_s - m).exp();
    Ok(eu / (eu + es))
}

/// Dense N×K matrix of unsafe probabilities with per-sample labels and
/// split tags. Immutable after construction; filters return new matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptScoreMatrix {
    sample_ids: Vec<String>,
    datasets: Vec<String>,
    labels: Vec<Label>,
    splits: Vec<Split>,
    prompts: Vec<PromptMeta>,
    /// Row-major, `n_samples * n_prompts` entries.
    p_unsafe: Vec<f64>,
}

impl PromptScoreMatrix {
    /// Build a matrix, validating dimensions, id uniqueness, and probability
    /// range. Prompt ids must be unique; contiguity from 1 is enforced only
    /// at the parse layer so that family-restricted views keep their
    /// original ids.
    pub fn new(
        sample_ids: Vec<String>,
        datasets: Vec<String>,
        labels: Vec<Label>,
        splits: Vec<Split>,
        prompts: Vec<PromptMeta>,
        p_unsafe: Vec<f64>,
    ) -> Result<Self> {
        let n = sample_ids.len();
        let k = prompts.len();
        if k == 0 {
            return Err(Error::InvalidInput("matrix must have at least one prompt".into()));
        }
        if datasets.len() != n || labels.len() != n || splits.len() != n {
            return Err(Error::InvalidInput(format!(
                "inconsistent sample metadata lengths (ids {}, datasets {}, labels {}, splits {})",
                n,
                datasets.len(),
                labels.len(),
                splits.len()
            )));
        }
        if p_unsafe.len() != n * k {
            return Err(Error::InvalidInput(format!(
                "score matrix has {} entries, expected {}x{}={}",
                p_unsafe.len(),
                n,
                k,
                n * k
            )));
        }
        let mut seen_ids = HashSet::with_capacity(n);
        for id in &sample_ids {
            if !seen_ids.insert(id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate sample_id '{id}'")));
            }
        }
        let mut seen_prompts = HashSet::with_capacity(k);
        for p in &prompts {
            if !seen_prompts.insert(p.prompt_id) {
                return Err(Error::InvalidInput(format!(
                    "duplicate prompt_id {}",
                    p.prompt_id
                )));
            }
        }
        for (idx, &p) in p_unsafe.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                let (i, kk) = (idx / k, idx % k);
                return Err(Error::InvalidInput(format!(
                    "sample '{}' prompt {}: p_unsafe {} outside [0,1]",
                    sample_ids[i], prompts[kk].prompt_id, p
                )));
            }
        }
        Ok(PromptScoreMatrix {
            sample_ids,
            datasets,
            labels,
            splits,
            prompts,
            p_unsafe,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_prompts(&self) -> usize {
        self.prompts.len()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn prompts(&self) -> &[PromptMeta] {
        &self.prompts
    }

    pub fn score(&self, sample: usize, prompt: usize) -> f64 {
        self.p_unsafe[sample * self.prompts.len() + prompt]
    }

    /// One sample's scores across prompts, in prompt order.
    pub fn row(&self, sample: usize) -> &[f64] {
        let k = self.prompts.len();
        &self.p_unsafe[sample * k..(sample + 1) * k]
    }

    /// One prompt's scores across samples, in sample order.
    pub fn column(&self, prompt: usize) -> Vec<f64> {
        let k = self.prompts.len();
        self.p_unsafe.iter().skip(prompt).step_by(k).copied().collect()
    }

    /// Column index of a prompt id.
    pub fn prompt_index(&self, prompt_id: u32) -> Option<usize> {
        self.prompts.iter().position(|p| p.prompt_id == prompt_id)
    }

    /// 0/1 indicators of the unsafe class, in sample order.
    pub fn label_indicators(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.indicator()).collect()
    }

    /// Submatrix containing only the requested family's columns; rows
    /// unchanged, original prompt ids retained.
    pub fn restrict_family(&self, family: PromptFamily) -> Result<PromptScoreMatrix> {
        let cols: Vec<usize> = self
            .prompts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.family == family)
            .map(|(idx, _)| idx)
            .collect();
        if cols.is_empty() {
            return Err(Error::UnknownFamily(family.to_string()));
        }
        let prompts: Vec<PromptMeta> = cols.iter().map(|&c| self.prompts[c]).collect();
        let mut p_unsafe = Vec::with_capacity(self.n_samples() * cols.len());
        for i in 0..self.n_samples() {
            let row = self.row(i);
            p_unsafe.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(PromptScoreMatrix {
            sample_ids: self.sample_ids.clone(),
            datasets: self.datasets.clone(),
            labels: self.labels.clone(),
            splits: self.splits.clone(),
            prompts,
            p_unsafe,
        })
    }

    /// Row-filtered view keeping only samples with the given split tag.
    pub fn split_view(&self, split: Split) -> Result<PromptScoreMatrix> {
        let rows: Vec<usize> = (0..self.n_samples())
            .filter(|&i| self.splits[i] == split)
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptySplit(split.to_string()));
        }
        self.select_rows(&rows)
    }

    /// True when at least one row carries the split tag.
    pub fn has_split(&self, split: Split) -> bool {
        self.splits.contains(&split)
    }

    fn select_rows(&self, rows: &[usize]) -> Result<PromptScoreMatrix> {
        let k = self.prompts.len();
        let mut p_unsafe = Vec::with_capacity(rows.len() * k);
        for &i in rows {
            p_unsafe.extend_from_slice(self.row(i));
        }
        Ok(PromptScoreMatrix {
            sample_ids: rows.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            datasets: rows.iter().map(|&i| self.datasets[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            splits: rows.iter().map(|&i| self.splits[i]).collect(),
            prompts: self.prompts.clone(),
            p_unsafe,
        })
    }

    /// Retag splits deterministically: the first `round(train_fraction * N)`
    /// samples (input order) become train, the rest test. Used to make
    /// synthetic artifacts exercise the locked train/test protocol.
    pub fn retag_splits(&self, train_fraction: f64) -> Result<PromptScoreMatrix> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::InvalidInput(format!(
                "train_fraction {train_fraction} outside [0,1]"
            )));
        }
        let n = self.n_samples();
        let n_train = (train_fraction * n as f64 + 0.5).floor() as usize;
        let mut out = self.clone();
        for (i, s) in out.splits.iter_mut().enumerate() {
            *s = if i < n_train { Split::Train } else { Split::Test };
        }
        Ok(out)
    }

    /// Serialize to the canonical JSONL form (labels as strings, scores in
    /// ascending prompt-id order, probabilities only).
    pub fn to_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.n_samples() {
            let rec = RecordWire {
                sample_id: self.sample_ids[i].clone(),
                dataset: self.datasets[i].clone(),
                split: self.splits[i],
                label: self.labels[i],
                scores: self
                    .prompts
                    .iter()
                    .zip(self.row(i))
                    .map(|(p, &score)| ScoreWire {
                        prompt_id: p.prompt_id,
                        family: p.family,
                        p_unsafe: Some(score),
                        logit_u: None,
                        logit_s: None,
                    })
                    .collect(),
            };
            let line = serde_json::to_string(&rec)
                .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.to_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }
}

#[derive(Serialize, Deserialize)]
struct RecordWire {
    sample_id: String,
    dataset: String,
    split: Split,
    label: Label,
    scores: Vec<ScoreWire>,
}

#[derive(Serialize, Deserialize)]
struct ScoreWire {
    prompt_id: u32,
    family: PromptFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_unsafe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logit_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logit_s: Option<f64>,
}

/// Parse a JSONL score artifact into a validated dense matrix.
///
/// Each line is one sample. Score entries may carry `p_unsafe` directly or a
/// raw `logit_u`/`logit_s` pair; when both are present the raw logits win
/// and are re-normalized. The prompt set must be identical across samples
/// and its ids contiguous from 1.
pub fn parse_scores_jsonl<R: BufRead>(reader: R) -> Result<PromptScoreMatrix> {
    let mut sample_ids = Vec::new();
    let mut datasets = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    let mut prompts: Option<Vec<PromptMeta>> = None;
    let mut p_unsafe: Vec<f64> = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();

    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordWire = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;

        if !seen_ids.insert(rec.sample_id.clone()) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate sample_id '{}'", rec.sample_id),
            });
        }

        // Canonical column order is ascending prompt id.
        let mut scores = rec.scores;
        scores.sort_by_key(|s| s.prompt_id);
        let metas: Vec<PromptMeta> = scores
            .iter()
            .map(|s| PromptMeta {
                prompt_id: s.prompt_id,
                family: s.family,
            })
            .collect();
        validate_prompt_metas(&metas, line_no, &rec.sample_id)?;

        match &prompts {
            None => prompts = Some(metas),
            Some(expected) if *expected == metas => {}
            Some(expected) => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!(
                        "sample '{}' has an inconsistent prompt set: expected ids {:?}, got {:?}",
                        rec.sample_id,
                        expected.iter().map(|p| p.prompt_id).collect::<Vec<_>>(),
                        metas.iter().map(|p| p.prompt_id).collect::<Vec<_>>()
                    ),
                });
            }
        }

        for s in &scores {
            let p = match (s.logit_u, s.logit_s, s.p_unsafe) {
                // Raw logits are the single source of truth when present.
                (Some(lu), Some(ls), _) => {
                    subset_normalize(RawLogitRecord { logit_u: lu, logit_s: ls }).map_err(
                        |e| Error::Parse {
                            line: line_no,
                            msg: format!(
                                "sample '{}' prompt {}: {e}",
                                rec.sample_id, s.prompt_id
                            ),
                        },
                    )?
                }
                (None, None, Some(p)) => p,
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!(
                            "sample '{}' prompt {}: need p_unsafe or a complete logit_u/logit_s pair",
                            rec.sample_id, s.prompt_id
                        ),
                    });
                }
            };
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!(
                        "sample '{}' prompt {}: p_unsafe {} outside [0,1]",
                        rec.sample_id, s.prompt_id, p
                    ),
                });
            }
            p_unsafe.push(p);
        }

        sample_ids.push(rec.sample_id);
        datasets.push(rec.dataset);
        labels.push(rec.label);
        splits.push(rec.split);
    }

    let prompts = prompts.ok_or_else(|| Error::InvalidInput("no records in input".into()))?;
    PromptScoreMatrix::new(sample_ids, datasets, labels, splits, prompts, p_unsafe)
}

/// Convenience wrapper over [`parse_scores_jsonl`] for in-memory input.
pub fn parse_scores_str(s: &str) -> Result<PromptScoreMatrix> {
    parse_scores_jsonl(s.as_bytes())
}

fn validate_prompt_metas(metas: &[PromptMeta], line: usize, sample: &str) -> Result<()> {
    if metas.is_empty() {
        return Err(Error::Parse {
            line,
            msg: format!("sample '{sample}' has no scores"),
        });
    }
    for (idx, m) in metas.iter().enumerate() {
        let expected = idx as u32 + 1;
        if m.prompt_id != expected {
            return Err(Error::Parse {
                line,
                msg: format!(
                    "sample '{sample}': prompt ids must be unique and contiguous from 1, found {} at position {}",
                    m.prompt_id,
                    idx + 1
                ),
            });
        }
    }
    Ok(())
}
