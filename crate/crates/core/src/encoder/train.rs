//! Gradient-descent fitting of a classification head over frozen pooled
//! sentence features. The encoder body is never updated.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{EncoderModel, ForwardHooks};

/// Which classification head to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Nsp,
    Nli,
}

impl HeadKind {
    pub fn classes(&self) -> usize {
        match self {
            HeadKind::Nsp => 2,
            HeadKind::Nli => 3,
        }
    }
}

/// Loss history of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Mean cross-entropy per epoch, including the initial state.
    pub losses: Vec<f64>,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

fn softmax(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

fn logits_for(features: &Matrix, w: &Matrix, b: &[f64], row: usize) -> Vec<f64> {
    let mut out = b.to_vec();
    for (i, &x) in features.row(row).iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += x * w.get(i, j);
        }
    }
    out
}

/// Mean cross-entropy of a linear head over feature rows.
pub fn head_loss(w: &Matrix, b: &[f64], features: &Matrix, labels: &[usize]) -> f64 {
    let n = features.rows();
    let mut total = 0.0;
    for r in 0..n {
        let mut probs = logits_for(features, w, b, r);
        softmax(&mut probs);
        total -= probs[labels[r]].max(1e-300).ln();
    }
    total / n as f64
}

/// Analytic gradient of [`head_loss`] with respect to the weight matrix and
/// bias: `(softmax(z) - onehot) x^T`, averaged over the batch.
pub fn head_gradient(
    w: &Matrix,
    b: &[f64],
    features: &Matrix,
    labels: &[usize],
) -> (Matrix, Vec<f64>) {
    let n = features.rows();
    let d = features.cols();
    let classes = b.len();
    let mut gw = Matrix::zeros(d, classes);
    let mut gb = vec![0.0; classes];
    for r in 0..n {
        let mut probs = logits_for(features, w, b, r);
        softmax(&mut probs);
        probs[labels[r]] -= 1.0;
        for (i, &x) in features.row(r).iter().enumerate() {
            for (j, &p) in probs.iter().enumerate() {
                let v = gw.get(i, j) + x * p / n as f64;
                gw.set(i, j, v);
            }
        }
        for (j, &p) in probs.iter().enumerate() {
            gb[j] += p / n as f64;
        }
    }
    (gw, gb)
}

/// Computes pooled sentence features for each labeled example, the encoder
/// staying frozen throughout.
pub fn sentence_features(
    model: &EncoderModel,
    examples: &[(String, String, usize)],
) -> Result<(Matrix, Vec<usize>)> {
    let hooks = ForwardHooks::none();
    let mut rows = Vec::with_capacity(examples.len());
    let mut labels = Vec::with_capacity(examples.len());
    for (a, b, label) in examples {
        let trace = model.forward_pair(a, b, &hooks)?;
        rows.push(trace.sent);
        labels.push(*label);
    }
    Ok((Matrix::from_rows(&rows)?, labels))
}

/// Full-batch gradient descent on cross-entropy. Returns the fitted head
/// weights and the loss history; the caller installs them with
/// [`EncoderModel::with_head`]. A zero learning rate is a no-op.
pub fn train_head(
    model: &EncoderModel,
    head: HeadKind,
    examples: &[(String, String, usize)],
    lr: f64,
    epochs: usize,
) -> Result<(Matrix, Vec<f64>, TrainOutcome)> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if lr < 0.0 || !lr.is_finite() {
        return Err(Error::InvalidParameter {
            name: "lr",
            detail: format!("learning rate {lr} must be non-negative"),
        });
    }
    let classes = head.classes();
    for (_, _, label) in examples {
        if *label >= classes {
            return Err(Error::InvalidParameter {
                name: "label",
                detail: format!("label {label} outside 0..{classes}"),
            });
        }
    }

    let (features, labels) = sentence_features(model, examples)?;
    let (mut w, mut b) = match head {
        HeadKind::Nsp => (model.nsp_w.clone(), model.nsp_b.clone()),
        HeadKind::Nli => (model.nli_w.clone(), model.nli_b.clone()),
    };

    let mut losses = Vec::with_capacity(epochs + 1);
    losses.push(head_loss(&w, &b, &features, &labels));
    for _ in 0..epochs {
        let (gw, gb) = head_gradient(&w, &b, &features, &labels);
        for i in 0..w.rows() {
            for j in 0..w.cols() {
                let v = w.get(i, j) - lr * gw.get(i, j);
                w.set(i, j, v);
            }
        }
        for (bj, &g) in b.iter_mut().zip(&gb) {
            *bj -= lr * g;
        }
        losses.push(head_loss(&w, &b, &features, &labels));
    }

    let mut correct = 0usize;
    for (r, &label) in labels.iter().enumerate() {
        let mut probs = logits_for(&features, &w, &b, r);
        softmax(&mut probs);
        let pred = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if pred == label {
            correct += 1;
        }
    }

    let outcome = TrainOutcome {
        final_loss: *losses.last().unwrap(),
        train_accuracy: correct as f64 / features.rows() as f64,
        losses,
    };
    Ok((w, b, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::seeded_model;

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let model = seeded_model(3, 8, 2, 2, 32);
        let data = vec![
            ("he went home".to_string(), "she stayed".to_string(), 0usize),
            ("the man sat".to_string(), "he left early".to_string(), 1usize),
        ];
        let (w, b, outcome) = train_head(&model, HeadKind::Nsp, &data, 0.0, 5).unwrap();
        assert_eq!(w.data(), model.nsp_w.data());
        assert_eq!(b, model.nsp_b);
        let first = outcome.losses[0];
        assert!(outcome.losses.iter().all(|&l| l == first));
    }

    #[test]
    fn negative_learning_rate_is_rejected() {
        let model = seeded_model(3, 8, 2, 2, 32);
        let data = vec![("a b".to_string(), "c".to_string(), 0usize)];
        assert!(train_head(&model, HeadKind::Nsp, &data, -0.1, 1).is_err());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let model = seeded_model(3, 8, 2, 2, 32);
        let err = train_head(&model, HeadKind::Nsp, &[], 0.1, 1).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let model = seeded_model(11, 8, 2, 2, 32);
        let data: Vec<(String, String, usize)> = (0..6)
            .map(|i| {
                (
                    format!("the {} walked", if i % 2 == 0 { "man" } else { "woman" }),
                    "he sat down".to_string(),
                    i % 2,
                )
            })
            .collect();
        let (features, labels) = sentence_features(&model, &data).unwrap();
        let w = model.nsp_w.clone();
        let b = model.nsp_b.clone();
        let (gw, gb) = head_gradient(&w, &b, &features, &labels);

        let eps = 1e-4;
        // Three spread-out weight coordinates plus one bias coordinate.
        for (i, j) in [(0, 0), (3, 1), (7, 0)] {
            let mut wp = w.clone();
            wp.set(i, j, w.get(i, j) + eps);
            let mut wm = w.clone();
            wm.set(i, j, w.get(i, j) - eps);
            let numeric = (head_loss(&wp, &b, &features, &labels)
                - head_loss(&wm, &b, &features, &labels))
                / (2.0 * eps);
            let analytic = gw.get(i, j);
            let rel = (numeric - analytic).abs() / analytic.abs().max(1e-8);
            assert!(rel < 1e-4, "({i},{j}): numeric {numeric} vs analytic {analytic}");
        }
        let mut bp = b.clone();
        bp[1] += eps;
        let mut bm = b.clone();
        bm[1] -= eps;
        let numeric =
            (head_loss(&w, &bp, &features, &labels) - head_loss(&w, &bm, &features, &labels))
                / (2.0 * eps);
        let rel = (numeric - gb[1]).abs() / gb[1].abs().max(1e-8);
        assert!(rel < 1e-4);
    }

    // Perceptron oracle: returns true when the labeled points are linearly
    // separable (with bias), by running the perceptron rule to convergence.
    fn perceptron_separable(features: &Matrix, labels: &[usize]) -> bool {
        let d = features.cols();
        let mut w = vec![0.0; d + 1];
        for _ in 0..20_000 {
            let mut mistakes = 0;
            for (r, &label) in labels.iter().enumerate() {
                let y = if label == 1 { 1.0 } else { -1.0 };
                let mut act = w[d];
                for (wi, xi) in w[..d].iter().zip(features.row(r)) {
                    act += wi * xi;
                }
                if y * act <= 0.0 {
                    for (wi, xi) in w[..d].iter_mut().zip(features.row(r)) {
                        *wi += y * xi;
                    }
                    w[d] += y;
                    mistakes += 1;
                }
            }
            if mistakes == 0 {
                return true;
            }
        }
        false
    }

    #[test]
    fn separable_20_points_reach_full_training_accuracy() {
        use crate::synthetic::rank_one_stub;
        // The stub pools gendered contexts into two far-apart clusters along
        // one feature axis, giving 20 points that are separable by a wide
        // margin. The head starts from zero so the boundary is learned.
        let base = rank_one_stub(16, 2, 2, 48, 1.0);
        let model = base.with_head(HeadKind::Nsp, Matrix::zeros(16, 2), vec![0.0, 0.0]);
        let males = ["man", "father", "boy", "king", "husband", "uncle", "brother", "son", "he", "gentleman"];
        let females = ["woman", "mother", "girl", "queen", "wife", "aunt", "sister", "daughter", "she", "lady"];
        let templates = [
            "the {} walked into the kitchen .",
            "yesterday {} walked to the market .",
            "everyone said {} would arrive early today .",
            "the {} was reading a book .",
            "{} went home .",
        ];
        let mut data: Vec<(String, String, usize)> = Vec::new();
        for i in 0..10 {
            data.push((
                templates[i % 5].replace("{}", males[i]),
                "the train was cold this morning .".to_string(),
                1,
            ));
            data.push((
                templates[(i + 2) % 5].replace("{}", females[i]),
                "the garden was quiet tonight .".to_string(),
                0,
            ));
        }
        let (features, labels) = sentence_features(&model, &data).unwrap();
        assert!(
            perceptron_separable(&features, &labels),
            "oracle says the constructed set is not separable"
        );

        let (_, _, outcome) = train_head(&model, HeadKind::Nsp, &data, 0.1, 200).unwrap();
        assert_eq!(outcome.train_accuracy, 1.0, "losses: {:?}", &outcome.losses[..5]);
    }

    #[test]
    fn loss_is_non_increasing_on_separable_data() {
        let model = seeded_model(5, 8, 2, 2, 32);
        // Labels assigned by a fixed linear functional of the features, so the
        // two classes are linearly separable by construction.
        let sentences = [
            "he went home", "she stayed here", "the man sat", "the woman left",
            "a king spoke", "a queen ruled", "his father waited", "her mother cooked",
        ];
        let probe: Vec<(String, String, usize)> = sentences
            .iter()
            .map(|s| (s.to_string(), "they were quiet".to_string(), 0usize))
            .collect();
        let (features, _) = sentence_features(&model, &probe).unwrap();
        let data: Vec<(String, String, usize)> = sentences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let score: f64 = features.row(i).iter().sum();
                (
                    s.to_string(),
                    "they were quiet".to_string(),
                    usize::from(score > 0.0),
                )
            })
            .collect();
        let (_, _, outcome) = train_head(&model, HeadKind::Nsp, &data, 0.5, 100).unwrap();
        for pair in outcome.losses.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "loss increased: {pair:?}");
        }
    }
}
