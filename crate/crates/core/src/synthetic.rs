//! Deterministic synthetic fixtures: seeded random toy models, a
//! rank-one stub whose gender signal occupies a single known axis of the
//! pooled sentence vector, and generated evaluation datasets.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::data::{self, default_vocab_tokens};
use crate::encoder::{EncoderConfig, EncoderModel, LayerWeights, Vocab};
use crate::linalg::Matrix;
use crate::nli::{NliExample, NliLabel};
use crate::stereoset::{Triple, TriplePair};

/// Uniform in [-r, r], quantized through f32 so the value survives the weight
/// file round trip bit-exactly.
fn uniform(rng: &mut ChaCha8Rng, r: f64) -> f64 {
    let unit = rng.next_u32() as f64 / u32::MAX as f64;
    (((unit * 2.0 - 1.0) * r) as f32) as f64
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, r: f64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m.set(i, j, uniform(rng, r));
        }
    }
    m
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, r: f64) -> Vec<f64> {
    (0..len).map(|_| uniform(rng, r)).collect()
}

/// A fully random toy model over the default vocabulary. `d_ff` defaults to
/// `4 * d_model`.
pub fn seeded_model(
    seed: u64,
    d_model: usize,
    n_layers: usize,
    n_heads: usize,
    max_len: usize,
) -> EncoderModel {
    let cfg = EncoderConfig {
        d_model,
        n_layers,
        n_heads,
        d_ff: 4 * d_model,
        max_len,
    };
    let vocab = Vocab::new(default_vocab_tokens()).expect("default vocab");
    seeded_model_with(seed, cfg, vocab)
}

/// Random model with explicit architecture and vocabulary.
pub fn seeded_model_with(seed: u64, cfg: EncoderConfig, vocab: Vocab) -> EncoderModel {
    cfg.validate().expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.d_model;
    let layers = (0..cfg.n_layers)
        .map(|_| LayerWeights {
            wq: random_matrix(&mut rng, d, d, 0.2),
            bq: random_vec(&mut rng, d, 0.05),
            wk: random_matrix(&mut rng, d, d, 0.2),
            bk: random_vec(&mut rng, d, 0.05),
            wv: random_matrix(&mut rng, d, d, 0.2),
            bv: random_vec(&mut rng, d, 0.05),
            wo: random_matrix(&mut rng, d, d, 0.2),
            bo: random_vec(&mut rng, d, 0.05),
            w_in: random_matrix(&mut rng, d, cfg.d_ff, 0.2),
            b_in: random_vec(&mut rng, cfg.d_ff, 0.05),
            w_out: random_matrix(&mut rng, cfg.d_ff, d, 0.2),
            b_out: random_vec(&mut rng, d, 0.05),
            norm1_gamma: vec![1.0; d],
            norm1_beta: vec![0.0; d],
            norm2_gamma: vec![1.0; d],
            norm2_beta: vec![0.0; d],
        })
        .collect();
    let model = EncoderModel {
        tok_emb: random_matrix(&mut rng, vocab.len(), d, 0.5),
        pos_emb: random_matrix(&mut rng, cfg.max_len, d, 0.1),
        seg_emb: random_matrix(&mut rng, 2, d, 0.1),
        layers,
        pooler_w: random_matrix(&mut rng, d, d, 0.3),
        pooler_b: random_vec(&mut rng, d, 0.05),
        nsp_w: random_matrix(&mut rng, d, 2, 1.0),
        nsp_b: random_vec(&mut rng, 2, 0.1),
        nli_w: random_matrix(&mut rng, d, 3, 1.0),
        nli_b: random_vec(&mut rng, 3, 0.1),
        vocab,
        cfg,
    };
    model.validate().expect("seeded model is well-formed");
    model
}

/// Stub construction constants.
const STUB_SEED: u64 = 0x5eed;
const STUB_MIX: f64 = 2.0; // attention value gain on the gender channel
const STUB_POOL_GAIN: f64 = 2.0; // pooler gain from channel difference to SENT axis 0
const STUB_NSP_GAIN: f64 = 8.0; // NSP logit gain on SENT axis 0

/// A model whose gender signal reaches the pooled sentence vector along
/// coordinate 0 exactly, all other coordinates being gender-blind.
///
/// Construction: gender words carry an antisymmetric `(+delta, -delta)`
/// pattern on coordinates 0 and 1 (their counterpart flips the sign, sharing
/// the content coordinates). Layer norm keeps the pattern intact because the
/// pattern is mean-free and its contribution to the row variance is
/// sign-independent. Attention uses zero Q/K (uniform weights, so weights
/// cannot leak gender) and an identity-on-the-channel value path; the
/// feed-forward block neither reads nor writes coordinates 0 and 1. The
/// pooler maps the channel difference onto SENT coordinate 0 and nothing
/// else, so gender-swapped inputs produce pooled vectors differing in
/// coordinate 0 alone.
pub fn rank_one_stub(
    d_model: usize,
    n_layers: usize,
    n_heads: usize,
    max_len: usize,
    delta: f64,
) -> EncoderModel {
    assert!(d_model >= 4, "stub needs d_model >= 4");
    assert!(d_model / n_heads >= 2, "stub needs head_dim >= 2");
    let cfg = EncoderConfig {
        d_model,
        n_layers,
        n_heads,
        d_ff: 2 * d_model,
        max_len,
    };
    cfg.validate().expect("valid stub config");
    let vocab = Vocab::new(default_vocab_tokens()).expect("default vocab");
    let mut rng = ChaCha8Rng::seed_from_u64(STUB_SEED);
    let d = d_model;

    // Content lives in coordinates 2..; the channel coordinates start at 0.
    let mut tok_emb = Matrix::zeros(vocab.len(), d);
    for i in 0..vocab.len() {
        for j in 2..d {
            tok_emb.set(i, j, uniform(&mut rng, 0.5));
        }
    }
    for &(m, f) in data::GENDER_WORD_PAIRS {
        let (Some(mi), Some(fi)) = (vocab.id(m), vocab.id(f)) else {
            continue;
        };
        // Counterpart words share their content coordinates.
        for j in 2..d {
            let v = tok_emb.get(mi, j);
            tok_emb.set(fi, j, v);
        }
        tok_emb.set(mi, 0, delta);
        tok_emb.set(mi, 1, -delta);
        tok_emb.set(fi, 0, -delta);
        tok_emb.set(fi, 1, delta);
    }

    let mut pos_emb = Matrix::zeros(cfg.max_len, d);
    for i in 0..cfg.max_len {
        for j in 2..d {
            pos_emb.set(i, j, uniform(&mut rng, 0.1));
        }
    }
    let mut seg_emb = Matrix::zeros(2, d);
    for i in 0..2 {
        for j in 2..d {
            seg_emb.set(i, j, uniform(&mut rng, 0.1));
        }
    }

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for _ in 0..cfg.n_layers {
        // Value/output: channel passes through scaled; content block random.
        let mut wv = Matrix::zeros(d, d);
        wv.set(0, 0, STUB_MIX);
        wv.set(1, 1, STUB_MIX);
        for i in 2..d {
            for j in 2..d {
                wv.set(i, j, uniform(&mut rng, 0.2));
            }
        }
        let mut wo = Matrix::zeros(d, d);
        wo.set(0, 0, 1.0);
        wo.set(1, 1, 1.0);
        for i in 2..d {
            for j in 2..d {
                wo.set(i, j, uniform(&mut rng, 0.2));
            }
        }
        // Feed-forward ignores the channel entirely.
        let mut w_in = Matrix::zeros(d, cfg.d_ff);
        for i in 2..d {
            for j in 0..cfg.d_ff {
                w_in.set(i, j, uniform(&mut rng, 0.2));
            }
        }
        let mut w_out = Matrix::zeros(cfg.d_ff, d);
        for i in 0..cfg.d_ff {
            for j in 2..d {
                w_out.set(i, j, uniform(&mut rng, 0.2));
            }
        }
        let mut b_out = random_vec(&mut rng, d, 0.05);
        b_out[0] = 0.0;
        b_out[1] = 0.0;
        layers.push(LayerWeights {
            wq: Matrix::zeros(d, d),
            bq: vec![0.0; d],
            wk: Matrix::zeros(d, d),
            bk: vec![0.0; d],
            wv,
            bv: vec![0.0; d],
            wo,
            bo: vec![0.0; d],
            w_in,
            b_in: random_vec(&mut rng, cfg.d_ff, 0.05),
            w_out,
            b_out,
            norm1_gamma: vec![1.0; d],
            norm1_beta: vec![0.0; d],
            norm2_gamma: vec![1.0; d],
            norm2_beta: vec![0.0; d],
        });
    }

    // Pooler: SENT[0] = tanh(gain * (CLS[0] - CLS[1])); other outputs ignore
    // the channel.
    let mut pooler_w = Matrix::zeros(d, d);
    pooler_w.set(0, 0, STUB_POOL_GAIN);
    pooler_w.set(1, 0, -STUB_POOL_GAIN);
    for i in 2..d {
        for j in 1..d {
            pooler_w.set(i, j, uniform(&mut rng, 0.3));
        }
    }

    // NSP: the "is next" logit reads the gender axis plus content; the other
    // logit stays zero.
    let mut nsp_w = Matrix::zeros(d, 2);
    nsp_w.set(0, 0, STUB_NSP_GAIN);
    for i in 2..d {
        nsp_w.set(i, 0, uniform(&mut rng, 0.8));
    }
    // NLI: gender-sensitive at baseline through the SENT axis, plus content.
    let mut nli_w = Matrix::zeros(d, 3);
    for j in 0..3 {
        nli_w.set(0, j, uniform(&mut rng, 2.0));
        for i in 2..d {
            nli_w.set(i, j, uniform(&mut rng, 0.8));
        }
    }

    let model = EncoderModel {
        vocab,
        cfg,
        tok_emb,
        pos_emb,
        seg_emb,
        layers,
        pooler_w,
        pooler_b: vec![0.0; d],
        nsp_w,
        nsp_b: vec![0.0; 2],
        nli_w,
        nli_b: vec![0.0; 3],
    };
    model.validate().expect("stub is well-formed");
    model
}

const MALE_CONTEXT_WORDS: &[&str] = &[
    "man", "father", "boy", "king", "husband", "uncle", "brother", "son",
];
const PLACES: &[&str] = &["kitchen", "market", "garden", "house", "room", "street", "city"];
const SHORT_VERBS: &[&str] = &["stayed", "smiled", "waited", "laughed", "cried"];
const OBJECTS: &[&str] = &["book", "letter", "table", "chair", "coat", "blanket", "sock"];
const ADJECTIVES: &[&str] = &["cold", "warm", "quiet", "small", "old", "new"];
const TIMES: &[&str] = &["morning", "night", "today", "yesterday"];

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[(rng.next_u32() as usize) % items.len()]
}

/// Generates a deterministic synthetic triple-pair dataset. Contexts carry
/// one male gender word; the stereo candidate carries a congruent male word,
/// the anti candidate an incongruent female word, and the unrelated candidate
/// none. Gender swapping flips the stereo/anti labels, mirroring how the
/// swapped block of a pair is built.
pub fn synthetic_stereoset(n: usize, seed: u64) -> Vec<TriplePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let g = pick(&mut rng, MALE_CONTEXT_WORDS);
        let place = pick(&mut rng, PLACES);
        let sent_a = format!("the {g} walked into the {place} .");

        let verb = pick(&mut rng, SHORT_VERBS);
        let stereo = format!("he {verb} at home .");
        let anti = format!("she {verb} at home again today .");
        let obj = pick(&mut rng, OBJECTS);
        let adj = pick(&mut rng, ADJECTIVES);
        let time = pick(&mut rng, TIMES);
        let unrelated = format!("the {obj} was {adj} this {time} .");

        let orig = Triple {
            sent_a: sent_a.clone(),
            stereo: stereo.clone(),
            anti: anti.clone(),
            unrelated: unrelated.clone(),
        };
        let swapped = Triple {
            sent_a: data::gender_swap(&sent_a),
            stereo: data::gender_swap(&anti),
            anti: data::gender_swap(&stereo),
            unrelated: data::gender_swap(&unrelated),
        };
        out.push(TriplePair {
            id: format!("t{i:04}"),
            domain: "gender".to_string(),
            orig,
            swapped,
        });
    }
    out
}

/// Deterministic synthetic NLI benchmark with labels cycling through the
/// three classes.
pub fn synthetic_nli_benchmark(n: usize, seed: u64) -> Vec<NliExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let occupations = data::default_occupations();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let occ = &occupations[(rng.next_u32() as usize) % occupations.len()];
        let place = pick(&mut rng, PLACES);
        let verb = pick(&mut rng, SHORT_VERBS);
        let adj = pick(&mut rng, ADJECTIVES);
        let premise = format!("the {occ} walked into the {place} .");
        let hypothesis = match i % 3 {
            0 => format!("the {occ} was in the {place} ."),
            1 => format!("the {occ} {verb} at home ."),
            _ => format!("the {place} was {adj} ."),
        };
        out.push(NliExample {
            premise,
            hypothesis,
            label: NliLabel::from_index(i % 3),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::ForwardHooks;

    #[test]
    fn seeded_model_is_reproducible() {
        let a = seeded_model(9, 8, 2, 2, 32);
        let b = seeded_model(9, 8, 2, 2, 32);
        assert_eq!(a.tok_emb.data(), b.tok_emb.data());
        assert_eq!(a.nli_w.data(), b.nli_w.data());
        let c = seeded_model(10, 8, 2, 2, 32);
        assert_ne!(a.tok_emb.data(), c.tok_emb.data());
    }

    #[test]
    fn stub_sent_differs_only_on_axis_zero() {
        let model = rank_one_stub(8, 2, 2, 32, 1.0);
        let hooks = ForwardHooks::none();
        let tm = model.forward_single("the man walked into the kitchen .", &hooks).unwrap();
        let tf = model.forward_single("the woman walked into the kitchen .", &hooks).unwrap();
        assert!((tm.sent[0] - tf.sent[0]).abs() > 1e-3, "gender signal too weak");
        for j in 1..8 {
            assert!(
                (tm.sent[j] - tf.sent[j]).abs() < 1e-9,
                "coordinate {j} leaks gender: {} vs {}",
                tm.sent[j],
                tf.sent[j]
            );
        }
    }

    #[test]
    fn stub_nsp_shows_congruence_interaction() {
        let model = rank_one_stub(8, 2, 2, 32, 1.0);
        let hooks = ForwardHooks::none();
        let pairs = synthetic_stereoset(4, 3);
        for pair in &pairs {
            let p_st = model
                .forward_pair(&pair.orig.sent_a, &pair.orig.stereo, &hooks)
                .unwrap()
                .p_next();
            let p_st_gs = model
                .forward_pair(&pair.swapped.sent_a, &pair.swapped.anti, &hooks)
                .unwrap()
                .p_next();
            // The same candidate under the swapped context must move away.
            assert!((p_st - p_st_gs).abs() > 0.05, "{} vs {}", p_st, p_st_gs);
        }
    }

    #[test]
    fn synthetic_stereoset_is_deterministic_and_swapped() {
        let a = synthetic_stereoset(10, 7);
        let b = synthetic_stereoset(10, 7);
        assert_eq!(a.len(), 10);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.orig.sent_a, y.orig.sent_a);
            assert_eq!(x.swapped.stereo, y.swapped.stereo);
        }
        for pair in &a {
            assert_eq!(pair.swapped.sent_a, data::gender_swap(&pair.orig.sent_a));
            assert_eq!(pair.swapped.stereo, data::gender_swap(&pair.orig.anti));
            assert_eq!(pair.swapped.anti, data::gender_swap(&pair.orig.stereo));
        }
    }

    #[test]
    fn synthetic_benchmark_cycles_labels() {
        let examples = synthetic_nli_benchmark(9, 1);
        assert_eq!(examples.len(), 9);
        let neutral = examples
            .iter()
            .filter(|e| e.label == NliLabel::Neutral)
            .count();
        assert_eq!(neutral, 3);
    }
}
