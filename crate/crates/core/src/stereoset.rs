//! Triple-pair data model and the intrinsic bias measures computed from NSP
//! probabilities: the legacy stereotype proportion SS, per-pair strength s
//! and its top-fraction aggregate S, per-pair distance d and its aggregate D,
//! plus Spearman rank correlation for cross-metric analysis.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::interventions::HookSet;

/// A context sentence with its three candidate next sentences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Triple {
    pub sent_a: String,
    pub stereo: String,
    pub anti: String,
    pub unrelated: String,
}

/// An original triple plus its gender-swapped complement. Gender swapping is
/// assumed to flip the stereotype, so the swapped block's `stereo` text is
/// the swapped form of the original `anti` text and vice versa.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriplePair {
    pub id: String,
    pub domain: String,
    pub orig: Triple,
    pub swapped: Triple,
}

impl TriplePair {
    fn non_empty(&self) -> Result<()> {
        for (field, text) in [
            ("orig.sent_a", &self.orig.sent_a),
            ("orig.stereo", &self.orig.stereo),
            ("orig.anti", &self.orig.anti),
            ("orig.unrelated", &self.orig.unrelated),
            ("swapped.sent_a", &self.swapped.sent_a),
            ("swapped.stereo", &self.swapped.stereo),
            ("swapped.anti", &self.swapped.anti),
            ("swapped.unrelated", &self.swapped.unrelated),
        ] {
            if text.trim().is_empty() {
                return Err(Error::InvalidParameter {
                    name: "triple",
                    detail: format!("{field} is empty"),
                });
            }
        }
        Ok(())
    }
}

/// The six NSP probabilities of one triple pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripleScores {
    pub id: String,
    pub p_stereo: f64,
    pub p_anti: f64,
    pub p_unr: f64,
    pub p_stereo_gs: f64,
    pub p_anti_gs: f64,
    pub p_unr_gs: f64,
}

/// Spearman coefficient with its t-approximation p-value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Feeds all six (sentA, sentB) combinations of every triple pair through the
/// hooked model; the probability recorded is the NSP "is next" class. Order
/// of the output matches the input.
pub fn score_triples(
    model: &EncoderModel,
    hookset: &HookSet,
    triples: &[TriplePair],
) -> Result<Vec<TripleScores>> {
    if triples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    triples
        .par_iter()
        .map(|pair| {
            let hooks = hookset.forward_hooks();
            let score = |a: &str, b: &str| -> Result<f64> {
                Ok(model.forward_pair(a, b, &hooks)?.p_next())
            };
            let run = || -> Result<TripleScores> {
                pair.non_empty()?;
                Ok(TripleScores {
                    id: pair.id.clone(),
                    p_stereo: score(&pair.orig.sent_a, &pair.orig.stereo)?,
                    p_anti: score(&pair.orig.sent_a, &pair.orig.anti)?,
                    p_unr: score(&pair.orig.sent_a, &pair.orig.unrelated)?,
                    p_stereo_gs: score(&pair.swapped.sent_a, &pair.swapped.stereo)?,
                    p_anti_gs: score(&pair.swapped.sent_a, &pair.swapped.anti)?,
                    p_unr_gs: score(&pair.swapped.sent_a, &pair.swapped.unrelated)?,
                })
            };
            run().map_err(|e| Error::for_triple(&pair.id, e))
        })
        .collect()
}

/// Legacy stereotype score: the proportion of original triples where the
/// stereotype strictly outranks the anti-stereotype. Ties count as unbiased.
pub fn ss_score(scores: &[TripleScores]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits = scores.iter().filter(|s| s.p_stereo > s.p_anti).count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Gender bias strength of a single triple pair:
/// `s = p_stereo - p_anti - p_anti_gs + p_stereo_gs`, in [-2, 2].
pub fn pair_strength(ts: &TripleScores) -> f64 {
    ts.p_stereo - ts.p_anti - ts.p_anti_gs + ts.p_stereo_gs
}

/// Ability gap of a single triple pair: `d = |p_unr - p_unr_gs|`.
pub fn pair_distance(ts: &TripleScores) -> f64 {
    (ts.p_unr - ts.p_unr_gs).abs()
}

fn top_fraction_mean(
    scores: &[TripleScores],
    top_frac: f64,
    key: impl Fn(&TripleScores) -> f64,
) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(top_frac > 0.0 && top_frac <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "top_frac",
            detail: format!("{top_frac} outside (0, 1]"),
        });
    }
    let mut keyed: Vec<(f64, &str)> = scores.iter().map(|s| (key(s), s.id.as_str())).collect();
    keyed.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| a.1.cmp(b.1))
    });
    let take = (top_frac * scores.len() as f64).ceil() as usize;
    let take = take.clamp(1, scores.len());
    Ok(keyed[..take].iter().map(|(v, _)| v).sum::<f64>() / take as f64)
}

/// Strength S: the mean of `s` over the `top_frac` most biased pairs (signed
/// descending, ties broken by ascending id).
pub fn strength(scores: &[TripleScores], top_frac: f64) -> Result<f64> {
    top_fraction_mean(scores, top_frac, pair_strength)
}

/// Distance D: the mean of `d` over the `top_frac` most distant pairs.
pub fn distance(scores: &[TripleScores], top_frac: f64) -> Result<f64> {
    top_fraction_mean(scores, top_frac, pair_distance)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // Tied group shares the average of ranks i+1..=j+1.
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties and a two-sided
/// p-value from the t approximation `t = rho * sqrt((n-2) / (1-rho^2))`.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::CorrelationInput {
            x_len: n,
            y_len: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "correlation input",
        });
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let mean = (n + 1) as f64 / 2.0;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = rx[i] - mean;
        let dy = ry[i] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroRankVariance);
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);

    let df = (n - 2) as f64;
    let p_value = if 1.0 - rho * rho < 1e-14 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        student_t_two_sided(t, df)
    };
    Ok(CorrelationResult {
        rho,
        p_value,
        n,
    })
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom:
/// `I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

fn ln_gamma(z: f64) -> f64 {
    // Lanczos approximation (g = 7, 9 coefficients).
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 3e-15 {
            break;
        }
    }
    h
}

fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_bt = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let bt = ln_bt.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - bt * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Reads a JSON-lines dataset, one [`TriplePair`] per line.
pub fn read_triples(path: &Path) -> Result<Vec<TriplePair>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading triples {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: TriplePair = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(pair);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

pub fn write_triples(path: &Path, triples: &[TriplePair]) -> Result<()> {
    let mut text = String::new();
    for t in triples {
        text.push_str(&serde_json::to_string(t).expect("triples serialize"));
        text.push('\n');
    }
    std::fs::write(path, text)
        .map_err(|e| Error::io(format!("writing triples {}", path.display()), e))
}

/// CSV export of raw scores.
pub fn write_scores_csv(path: &Path, scores: &[TripleScores]) -> Result<()> {
    let mut text = String::from("id,p_stereo,p_anti,p_unr,p_stereo_gs,p_anti_gs,p_unr_gs\n");
    for s in scores {
        text.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            s.id, s.p_stereo, s.p_anti, s.p_unr, s.p_stereo_gs, s.p_anti_gs, s.p_unr_gs
        ));
    }
    std::fs::write(path, text)
        .map_err(|e| Error::io(format!("writing scores {}", path.display()), e))
}
