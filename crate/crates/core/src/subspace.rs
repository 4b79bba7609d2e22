//! Gender-subspace estimation: feed gender-swapped sentence pairs through the
//! unmodified encoder, difference the hidden states at an intervention
//! location, and run PCA on the differences.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::encoder::{tokenize_single, AttnRole, EncoderModel, ForwardHooks, TensorArchive};
use crate::error::{Error, Result};
use crate::linalg::{self, Basis, Matrix};

/// Where a projection is applied inside the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Location {
    /// Pooled sentence vector before the classification heads.
    Sent,
    /// CLS row output by the final encoder layer.
    FinalCls,
    /// Every token row output by the penultimate layer.
    PenultTokens,
    /// One K/Q/V projection of one head at the penultimate layer.
    PenultAttn { head: usize, role: AttnRole },
}

impl Location {
    /// Maximum subspace dimensionality allowed at this location.
    pub fn max_dims(&self) -> usize {
        match self {
            Location::Sent | Location::PenultAttn { .. } => 1,
            Location::FinalCls | Location::PenultTokens => 2,
        }
    }

    pub fn check_dims(&self, dims: usize) -> Result<()> {
        if dims == 0 {
            return Err(Error::InvalidParameter {
                name: "dims",
                detail: "subspace dimension must be at least 1".into(),
            });
        }
        let max = self.max_dims();
        if dims > max {
            return Err(match max {
                1 => Error::OneDimensional {
                    location: self.to_string(),
                    requested: dims,
                },
                _ => Error::TwoDimensional {
                    location: self.to_string(),
                    requested: dims,
                },
            });
        }
        Ok(())
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Sent => write!(f, "sent"),
            Location::FinalCls => write!(f, "final_cls"),
            Location::PenultTokens => write!(f, "penult_tokens"),
            Location::PenultAttn { head, role } => {
                write!(f, "penult_attn.h{}.{}", head, role.short())
            }
        }
    }
}

impl FromStr for Location {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sent" => return Ok(Location::Sent),
            "final_cls" => return Ok(Location::FinalCls),
            "penult_tokens" => return Ok(Location::PenultTokens),
            _ => {}
        }
        let invalid = || Error::InvalidParameter {
            name: "location",
            detail: format!("unrecognized location \"{s}\""),
        };
        let rest = s.strip_prefix("penult_attn.h").ok_or_else(invalid)?;
        let (head_str, role_str) = rest.split_once('.').ok_or_else(invalid)?;
        let head = head_str.parse().map_err(|_| invalid())?;
        let role = AttnRole::from_short(role_str).ok_or_else(invalid)?;
        Ok(Location::PenultAttn { head, role })
    }
}

/// One gender-swapped sentence pair; the two sides must tokenize to the same
/// number of positions.
#[derive(Debug, Clone, Deserialize)]
pub struct GenderPair {
    pub male: String,
    pub female: String,
}

/// Non-empty list of estimation pairs.
#[derive(Debug, Clone)]
pub struct GenderPairSet {
    pairs: Vec<GenderPair>,
}

impl GenderPairSet {
    pub fn new(pairs: Vec<GenderPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(GenderPairSet { pairs })
    }

    pub fn pairs(&self) -> &[GenderPair] {
        &self.pairs
    }

    /// Reads a JSON-lines file of `{"male": .., "female": ..}` objects.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading pairs {}", path.display()), e))?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let pair: GenderPair = serde_json::from_str(line).map_err(|e| Error::Malformed {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            pairs.push(pair);
        }
        GenderPairSet::new(pairs)
    }
}

/// Estimated subspace bound to its location.
#[derive(Debug, Clone)]
pub struct GenderSubspace {
    pub location: Location,
    pub basis: Basis,
}

/// Stacks hidden-state differences (male minus female) at `location`, one row
/// per pair for sentence-level locations and one row per aligned token
/// position per pair for token-level ones. Hooks stay disabled so estimation
/// always reflects the unmodified model.
pub fn collect_differences(
    model: &EncoderModel,
    pairs: &GenderPairSet,
    location: Location,
) -> Result<Matrix> {
    let hooks = ForwardHooks::none();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for pair in pairs.pairs() {
        let enc_m = tokenize_single(&model.vocab, &pair.male, model.cfg.max_len)?;
        let enc_f = tokenize_single(&model.vocab, &pair.female, model.cfg.max_len)?;
        if enc_m.ids.len() != enc_f.ids.len() {
            return Err(Error::PairLengthMismatch {
                male: pair.male.clone(),
                female: pair.female.clone(),
                male_len: enc_m.ids.len(),
                female_len: enc_f.ids.len(),
            });
        }
        let tm = model.forward(&enc_m.ids, &enc_m.segments, &hooks)?;
        let tf = model.forward(&enc_f.ids, &enc_f.segments, &hooks)?;
        match location {
            Location::Sent => {
                rows.push(diff(&tm.sent, &tf.sent));
            }
            Location::FinalCls => {
                rows.push(diff(&tm.cls_final, &tf.cls_final));
            }
            Location::PenultTokens => {
                let penult = model.penult_layer() + 1; // token_states[0] is embeddings
                let sm = &tm.token_states[penult];
                let sf = &tf.token_states[penult];
                for t in 0..sm.rows() {
                    rows.push(diff(sm.row(t), sf.row(t)));
                }
            }
            Location::PenultAttn { head, role } => {
                if head >= model.n_heads() {
                    return Err(Error::InvalidParameter {
                        name: "head",
                        detail: format!("head {head} out of range for {} heads", model.n_heads()),
                    });
                }
                let mm = &tm.penult_kqv.role(role)[head];
                let mf = &tf.penult_kqv.role(role)[head];
                for t in 0..mm.rows() {
                    rows.push(diff(mm.row(t), mf.row(t)));
                }
            }
        }
    }
    Matrix::from_rows(&rows)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// PCA over the collected differences, wrapped with the location.
pub fn estimate(
    model: &EncoderModel,
    pairs: &GenderPairSet,
    location: Location,
    dims: usize,
) -> Result<GenderSubspace> {
    location.check_dims(dims)?;
    let diffs = collect_differences(model, pairs, location)?;
    let basis = linalg::pca(&diffs, dims)?;
    Ok(GenderSubspace { location, basis })
}

/// Every estimated subspace a configuration grid can request.
#[derive(Debug, Clone, Default)]
pub struct SubspaceSet {
    map: BTreeMap<Location, GenderSubspace>,
}

impl SubspaceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sub: GenderSubspace) {
        self.map.insert(sub.location, sub);
    }

    pub fn get(&self, location: Location) -> Option<&GenderSubspace> {
        self.map.get(&location)
    }

    pub fn locations(&self) -> impl Iterator<Item = Location> + '_ {
        self.map.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Estimates the full set required by the grid: SENT (1-dim), final CLS
    /// (2-dim), penultimate tokens (2-dim), and a 1-dim subspace per head and
    /// role of the penultimate attention.
    pub fn estimate_all(model: &EncoderModel, pairs: &GenderPairSet) -> Result<SubspaceSet> {
        let mut set = SubspaceSet::new();
        set.insert(estimate(model, pairs, Location::Sent, 1)?);
        set.insert(estimate(model, pairs, Location::FinalCls, 2)?);
        set.insert(estimate(model, pairs, Location::PenultTokens, 2)?);
        for head in 0..model.n_heads() {
            for role in AttnRole::ALL {
                set.insert(estimate(model, pairs, Location::PenultAttn { head, role }, 1)?);
            }
        }
        Ok(set)
    }

    /// Writes the cache as `subspace.{location}.basis` / `.weights` tensors.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut a = TensorArchive::new();
        a.set_meta("subspaces", self.map.len());
        for (loc, sub) in &self.map {
            let dim = sub.basis.dim();
            let len = sub.basis.vector_len();
            let mut flat = Vec::with_capacity(dim * len);
            for v in sub.basis.vectors() {
                flat.extend_from_slice(v);
            }
            a.push(format!("subspace.{loc}.basis"), vec![dim, len], flat);
            a.push(
                format!("subspace.{loc}.weights"),
                vec![dim],
                sub.basis.weights().to_vec(),
            );
        }
        a.save(dir)
    }

    /// Loads a cache written by [`SubspaceSet::save`]. Basis vectors are
    /// re-orthonormalized because the f32 blob round-trip loses a few bits.
    pub fn load(dir: &Path) -> Result<SubspaceSet> {
        let a = TensorArchive::load(dir)?;
        let mut set = SubspaceSet::new();
        for t in &a.tensors {
            let Some(rest) = t.name.strip_prefix("subspace.") else {
                continue;
            };
            let Some(loc_str) = rest.strip_suffix(".basis") else {
                continue;
            };
            let location: Location = loc_str.parse()?;
            if t.shape.len() != 2 {
                return Err(Error::TensorShape {
                    name: t.name.clone(),
                    detail: "basis tensor must be rank 2".into(),
                });
            }
            let (dim, len) = (t.shape[0], t.shape[1]);
            let weights_t = a.get(&format!("subspace.{loc_str}.weights"))?;
            if weights_t.values.len() != dim {
                return Err(Error::TensorShape {
                    name: weights_t.name.clone(),
                    detail: format!("expected {dim} weights, got {}", weights_t.values.len()),
                });
            }
            let mut vectors: Vec<Vec<f64>> =
                t.values.chunks_exact(len).map(|c| c.to_vec()).collect();
            reorthonormalize(&mut vectors);
            let weights: Vec<f64> = weights_t.values.iter().map(|w| w.clamp(0.0, 1.0)).collect();
            let basis = Basis::new(vectors, weights)?;
            set.insert(GenderSubspace { location, basis });
        }
        if set.is_empty() {
            return Err(Error::InvalidParameter {
                name: "subspace cache",
                detail: format!("no subspace tensors found in {}", dir.display()),
            });
        }
        Ok(set)
    }
}

// Modified Gram-Schmidt; deterministic given the input.
fn reorthonormalize(vectors: &mut [Vec<f64>]) {
    for i in 0..vectors.len() {
        for j in 0..i {
            let ip = linalg::dot(&vectors[i], &vectors[j]);
            let prev = vectors[j].clone();
            for (x, p) in vectors[i].iter_mut().zip(prev) {
                *x -= ip * p;
            }
        }
        let n = linalg::norm(&vectors[i]);
        if n > 0.0 {
            for x in vectors[i].iter_mut() {
                *x /= n;
            }
        }
    }
}
