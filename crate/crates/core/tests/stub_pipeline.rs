//! End-to-end behavior on the rank-one stub: the gender signal is confined
//! to one axis of the pooled vector by construction, so the SENT hard
//! intervention must erase it completely.

use debias_core::data::default_gender_pairs;
use debias_core::interventions::{bind, DebiasConfig};
use debias_core::stereoset::{distance, score_triples, strength};
use debias_core::subspace::{estimate, Location, SubspaceSet};
use debias_core::synthetic::{rank_one_stub, synthetic_stereoset};
use debias_core::{ForwardHooks, HookSet};

#[test]
fn sent_hard_debias_erases_the_constructed_bias() {
    let model = rank_one_stub(8, 2, 2, 48, 1.0);
    let pairs = default_gender_pairs();
    let triples = synthetic_stereoset(30, 17);

    // Baseline: the congruent/incongruent construction forces large s.
    let baseline_scores = score_triples(&model, &HookSet::baseline(), &triples).unwrap();
    let s_base = strength(&baseline_scores, 0.1).unwrap();
    let d_base = distance(&baseline_scores, 0.1).unwrap();
    assert!(s_base > 0.5, "baseline strength {s_base} not > 0.5");
    assert!(d_base > 0.0);

    // SENT hard debias.
    let mut set = SubspaceSet::new();
    set.insert(estimate(&model, &pairs, Location::Sent, 1).unwrap());
    let hookset = bind(DebiasConfig::sent(0), &model, &set).unwrap();

    let scores = score_triples(&model, &hookset, &triples).unwrap();
    let s = strength(&scores, 0.1).unwrap();
    let d = distance(&scores, 0.1).unwrap();
    assert!(s.abs() < 1e-6, "debiased strength {s}");
    assert!(d.abs() < 1e-6, "debiased distance {d}");
}

#[test]
fn sent_hard_debias_collapses_gender_swapped_sent_vectors() {
    let model = rank_one_stub(8, 2, 2, 48, 1.0);
    let pairs = default_gender_pairs();
    let mut set = SubspaceSet::new();
    set.insert(estimate(&model, &pairs, Location::Sent, 1).unwrap());
    let hookset = bind(DebiasConfig::sent(0), &model, &set).unwrap();
    let hooks = hookset.forward_hooks();

    for (m, f) in [
        ("the man walked into the kitchen .", "the woman walked into the kitchen ."),
        ("yesterday king walked to the market .", "yesterday queen walked to the market ."),
        ("he was reading a book .", "she was reading a book ."),
    ] {
        let tm = model.forward_single(m, &hooks).unwrap();
        let tf = model.forward_single(f, &hooks).unwrap();
        for (a, b) in tm.sent.iter().zip(&tf.sent) {
            assert!((a - b).abs() < 1e-6, "sent differs: {a} vs {b}");
        }
        // Baseline sanity: without the hook they must differ.
        let bm = model.forward_single(m, &ForwardHooks::none()).unwrap();
        let bf = model.forward_single(f, &ForwardHooks::none()).unwrap();
        assert!((bm.sent[0] - bf.sent[0]).abs() > 1e-3);
    }
}
