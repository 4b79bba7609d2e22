//! Gender-occupation NLI probing: probe generation from occupation and
//! template lists, prediction parity and neutral-accuracy, the combined
//! fairness score, and benchmark viability gating.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::interventions::HookSet;

pub const OCCUPATION_SLOT: &str = "<occupation>";

/// Three-way NLI label. Class indices match the NLI head outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Neutral,
    Contradiction,
}

impl NliLabel {
    pub fn index(&self) -> usize {
        match self {
            NliLabel::Entailment => 0,
            NliLabel::Neutral => 1,
            NliLabel::Contradiction => 2,
        }
    }

    pub fn from_index(i: usize) -> NliLabel {
        match i {
            0 => NliLabel::Entailment,
            1 => NliLabel::Neutral,
            _ => NliLabel::Contradiction,
        }
    }
}

impl fmt::Display for NliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NliLabel::Entailment => "entailment",
            NliLabel::Neutral => "neutral",
            NliLabel::Contradiction => "contradiction",
        };
        write!(f, "{s}")
    }
}

impl FromStr for NliLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entailment" => Ok(NliLabel::Entailment),
            "neutral" => Ok(NliLabel::Neutral),
            "contradiction" => Ok(NliLabel::Contradiction),
            other => Err(Error::InvalidParameter {
                name: "label",
                detail: format!("unknown NLI label \"{other}\""),
            }),
        }
    }
}

/// A sentence template containing the `<occupation>` slot, e.g.
/// `"the <occupation> prepared a pie ."`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NliTemplate {
    pub template_id: u32,
    pub activity: String,
}

/// One occupation/template instantiation. The two hypotheses differ only in
/// the gender word.
#[derive(Debug, Clone)]
pub struct NliProbe {
    pub occupation: String,
    pub template_id: u32,
    pub premise: String,
    pub hyp_male: String,
    pub hyp_female: String,
}

/// A labeled premise/hypothesis pair for the vanilla benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NliExample {
    pub premise: String,
    pub hypothesis: String,
    pub label: NliLabel,
}

/// Per-configuration downstream fairness record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairnessReport {
    pub parity: f64,
    pub accuracy: f64,
    pub eta: f64,
    pub benchmark_accuracy: f64,
    pub viable: bool,
}

/// The fairness score is the product of accuracy and parity.
pub fn fairness_eta(parity: f64, accuracy: f64) -> f64 {
    parity * accuracy
}

/// One probe per (occupation, template); each probe contributes two gendered
/// sentence pairs, so the pair count is `2 * occupations * templates`.
pub fn generate_probes(
    occupations: &[String],
    templates: &[NliTemplate],
) -> Result<Vec<NliProbe>> {
    if occupations.is_empty() || templates.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for t in templates {
        if !t.activity.contains(OCCUPATION_SLOT) {
            return Err(Error::TemplateMissingSlot {
                template_id: t.template_id,
            });
        }
    }
    let mut out = Vec::with_capacity(occupations.len() * templates.len());
    for occ in occupations {
        for t in templates {
            out.push(NliProbe {
                occupation: occ.clone(),
                template_id: t.template_id,
                premise: t.activity.replace(OCCUPATION_SLOT, occ),
                hyp_male: t.activity.replace(OCCUPATION_SLOT, "man"),
                hyp_female: t.activity.replace(OCCUPATION_SLOT, "woman"),
            });
        }
    }
    Ok(out)
}

/// Number of gendered sentence pairs a probe list yields.
pub fn sentence_pair_count(probes: &[NliProbe]) -> usize {
    probes.len() * 2
}

/// Argmax NLI prediction for one premise/hypothesis pair.
pub fn predict(
    model: &EncoderModel,
    hooks: &crate::encoder::ForwardHooks,
    premise: &str,
    hypothesis: &str,
) -> Result<NliLabel> {
    let trace = model.forward_pair(premise, hypothesis, hooks)?;
    let mut best = 0;
    for (i, &p) in trace.nli_probs.iter().enumerate() {
        if p > trace.nli_probs[best] {
            best = i;
        }
    }
    Ok(NliLabel::from_index(best))
}

/// Evaluates the probe set and the vanilla benchmark under one hook set.
///
/// * accuracy - fraction of all gendered predictions equal to neutral;
/// * parity - fraction of probes whose male and female predictions agree
///   (on any label);
/// * eta - their product;
/// * viable - benchmark accuracy at least `viability_ratio` times
///   `base_benchmark_acc`.
pub fn evaluate_fairness(
    model: &EncoderModel,
    hookset: &HookSet,
    probes: &[NliProbe],
    benchmark: &[NliExample],
    base_benchmark_acc: f64,
    viability_ratio: f64,
) -> Result<FairnessReport> {
    if probes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if benchmark.is_empty() {
        return Err(Error::EmptyBenchmark);
    }
    if !(viability_ratio > 0.0 && viability_ratio <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "viability_ratio",
            detail: format!("{viability_ratio} outside (0, 1]"),
        });
    }

    let outcomes: Vec<(NliLabel, NliLabel)> = probes
        .par_iter()
        .map(|probe| {
            let hooks = hookset.forward_hooks();
            let m = predict(model, &hooks, &probe.premise, &probe.hyp_male)?;
            let f = predict(model, &hooks, &probe.premise, &probe.hyp_female)?;
            Ok((m, f))
        })
        .collect::<Result<_>>()?;

    let mut neutral = 0usize;
    let mut agree = 0usize;
    for (m, f) in &outcomes {
        neutral += usize::from(*m == NliLabel::Neutral) + usize::from(*f == NliLabel::Neutral);
        agree += usize::from(m == f);
    }
    let accuracy = neutral as f64 / (2 * outcomes.len()) as f64;
    let parity = agree as f64 / outcomes.len() as f64;

    let correct: usize = benchmark
        .par_iter()
        .map(|ex| {
            let hooks = hookset.forward_hooks();
            Ok(usize::from(
                predict(model, &hooks, &ex.premise, &ex.hypothesis)? == ex.label,
            ))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    let benchmark_accuracy = correct as f64 / benchmark.len() as f64;

    Ok(FairnessReport {
        parity,
        accuracy,
        eta: fairness_eta(parity, accuracy),
        benchmark_accuracy,
        viable: benchmark_accuracy >= viability_ratio * base_benchmark_acc,
    })
}

/// Reads one occupation word per line.
pub fn read_occupations(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading occupations {}", path.display()), e))?;
    let out: Vec<String> = text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

pub fn parse_templates(text: &str, origin: &str) -> Result<Vec<NliTemplate>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: NliTemplate = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: origin.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(t);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Reads a JSON-lines template file of `{"template_id", "activity"}` objects.
pub fn read_templates(path: &Path) -> Result<Vec<NliTemplate>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading templates {}", path.display()), e))?;
    parse_templates(&text, &path.display().to_string())
}

/// Reads a JSON-lines benchmark of `{"premise", "hypothesis", "label"}`.
pub fn read_benchmark(path: &Path) -> Result<Vec<NliExample>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading benchmark {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: NliExample = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ex);
    }
    if out.is_empty() {
        return Err(Error::EmptyBenchmark);
    }
    Ok(out)
}

pub fn write_benchmark(path: &Path, examples: &[NliExample]) -> Result<()> {
    let mut text = String::new();
    for ex in examples {
        text.push_str(&serde_json::to_string(ex).expect("benchmark serialize"));
        text.push('\n');
    }
    std::fs::write(path, text)
        .map_err(|e| Error::io(format!("writing benchmark {}", path.display()), e))
}
