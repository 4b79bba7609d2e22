//! Debiasing configurations: the level/flag tuple identifying one model in
//! the intervention grid, hook binding against estimated subspaces, and
//! enumeration of the full 74-configuration grid.

use std::fmt;
use std::str::FromStr;

use crate::encoder::{AttnRole, EncoderModel, ForwardHooks};
use crate::error::{Error, Result};
use crate::linalg::{project_out_inplace, Basis};
use crate::subspace::{GenderSubspace, Location, SubspaceSet};

/// Intervention depth. Wherever an intervention is applied, all following
/// (shallower) interventions are also applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    None,
    Sent,
    FinalLayer,
    PenultLayer,
    PenultAttn,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::None => "none",
            Level::Sent => "sent",
            Level::FinalLayer => "final_layer",
            Level::PenultLayer => "penult_layer",
            Level::PenultAttn => "penult_attn",
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Level::None),
            "sent" => Ok(Level::Sent),
            "final_layer" => Ok(Level::FinalLayer),
            "penult_layer" => Ok(Level::PenultLayer),
            "penult_attn" => Ok(Level::PenultAttn),
            other => Err(Error::InvalidConfigValue {
                key: "level".into(),
                value: other.into(),
            }),
        }
    }
}

/// One intervention setting. `n_*` flags pick soft (1) versus hard (0)
/// projection; `c_*` flags pick a two-dimensional (1) versus one-dimensional
/// (0) subspace. Flags for levels deeper than `level` are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DebiasConfig {
    pub level: Level,
    pub n_pen: u8,
    pub c_pen: u8,
    pub n_fin: u8,
    pub c_fin: u8,
    pub n_p: u8,
}

impl DebiasConfig {
    pub fn none() -> Self {
        DebiasConfig {
            level: Level::None,
            n_pen: 0,
            c_pen: 0,
            n_fin: 0,
            c_fin: 0,
            n_p: 0,
        }
    }

    pub fn sent(n_p: u8) -> Self {
        DebiasConfig {
            level: Level::Sent,
            n_p,
            ..DebiasConfig::none()
        }
    }

    pub fn final_layer(n_fin: u8, c_fin: u8, n_p: u8) -> Self {
        DebiasConfig {
            level: Level::FinalLayer,
            n_fin,
            c_fin,
            n_p,
            ..DebiasConfig::none()
        }
    }

    pub fn penult_layer(n_pen: u8, c_pen: u8, n_fin: u8, c_fin: u8, n_p: u8) -> Self {
        DebiasConfig {
            level: Level::PenultLayer,
            n_pen,
            c_pen,
            n_fin,
            c_fin,
            n_p,
        }
    }

    pub fn penult_attn(n_pen: u8, c_pen: u8, n_fin: u8, c_fin: u8, n_p: u8) -> Self {
        DebiasConfig {
            level: Level::PenultAttn,
            n_pen,
            c_pen,
            n_fin,
            c_fin,
            n_p,
        }
    }

    /// Flags applicable at this config's level, deepest first.
    pub fn applicable_flags(&self) -> Vec<(&'static str, u8)> {
        let mut out = Vec::new();
        if self.level >= Level::PenultLayer {
            out.push(("n_pen", self.n_pen));
            out.push(("c_pen", self.c_pen));
        }
        if self.level >= Level::FinalLayer {
            out.push(("n_fin", self.n_fin));
            out.push(("c_fin", self.c_fin));
        }
        if self.level >= Level::Sent {
            out.push(("n_p", self.n_p));
        }
        out
    }

    /// Parses the whitespace-separated `key=value` text form. Unknown keys
    /// are rejected; known keys that do not apply at the given level are
    /// ignored.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut level: Option<Level> = None;
        let mut flags = [0u8; 5]; // n_pen, c_pen, n_fin, c_fin, n_p
        for part in text.split_whitespace() {
            let (key, value) = part.split_once('=').ok_or_else(|| Error::InvalidConfigValue {
                key: part.to_string(),
                value: "expected key=value".into(),
            })?;
            let slot = match key {
                "level" => {
                    level = Some(value.parse()?);
                    continue;
                }
                "n_pen" => 0,
                "c_pen" => 1,
                "n_fin" => 2,
                "c_fin" => 3,
                "n_p" => 4,
                other => return Err(Error::UnknownConfigKey(other.to_string())),
            };
            flags[slot] = match value {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::InvalidConfigValue {
                        key: key.to_string(),
                        value: other.to_string(),
                    })
                }
            };
        }
        let level = level.ok_or_else(|| Error::InvalidConfigValue {
            key: "level".into(),
            value: "missing".into(),
        })?;
        let mut cfg = DebiasConfig {
            level,
            n_pen: flags[0],
            c_pen: flags[1],
            n_fin: flags[2],
            c_fin: flags[3],
            n_p: flags[4],
        };
        // Inapplicable flags are ignored: zero them for a canonical value.
        if level < Level::PenultLayer {
            cfg.n_pen = 0;
            cfg.c_pen = 0;
        }
        if level < Level::FinalLayer {
            cfg.n_fin = 0;
            cfg.c_fin = 0;
        }
        if level < Level::Sent {
            cfg.n_p = 0;
        }
        Ok(cfg)
    }
}

impl fmt::Display for DebiasConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "level={}", self.level.as_str())?;
        for (k, v) in self.applicable_flags() {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for DebiasConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DebiasConfig::parse_str(s)
    }
}

/// The full grid: 2 SENT + 8 FINAL_LAYER + 32 PENULT_LAYER + 32 PENULT_ATTN
/// configurations, 74 in total, in lexicographic order with the last flag
/// varying fastest.
pub fn enumerate_grid() -> Vec<DebiasConfig> {
    let mut out = Vec::with_capacity(74);
    for n_p in 0..=1 {
        out.push(DebiasConfig::sent(n_p));
    }
    for n_fin in 0..=1 {
        for c_fin in 0..=1 {
            for n_p in 0..=1 {
                out.push(DebiasConfig::final_layer(n_fin, c_fin, n_p));
            }
        }
    }
    for deepest in [false, true] {
        for n_pen in 0..=1 {
            for c_pen in 0..=1 {
                for n_fin in 0..=1 {
                    for c_fin in 0..=1 {
                        for n_p in 0..=1 {
                            out.push(if deepest {
                                DebiasConfig::penult_attn(n_pen, c_pen, n_fin, c_fin, n_p)
                            } else {
                                DebiasConfig::penult_layer(n_pen, c_pen, n_fin, c_fin, n_p)
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// A configuration bound to the subspaces it needs. Immutable once built;
/// many hook sets may evaluate in parallel over one shared model.
#[derive(Debug, Clone)]
pub struct HookSet {
    pub config: DebiasConfig,
    sent: Option<Basis>,
    final_cls: Option<Basis>,
    penult_tokens: Option<Basis>,
    /// Indexed `head * 3 + role`, hard 1-dim projections.
    attn: Vec<Basis>,
    n_heads: usize,
}

impl HookSet {
    /// A hook set that installs nothing; forward traces match the raw model
    /// bit for bit.
    pub fn baseline() -> Self {
        HookSet {
            config: DebiasConfig::none(),
            sent: None,
            final_cls: None,
            penult_tokens: None,
            attn: Vec::new(),
            n_heads: 0,
        }
    }

    pub fn active_locations(&self) -> Vec<Location> {
        let mut out = Vec::new();
        if self.penult_tokens.is_some() {
            out.push(Location::PenultTokens);
        }
        if self.final_cls.is_some() {
            out.push(Location::FinalCls);
        }
        if self.sent.is_some() {
            out.push(Location::Sent);
        }
        if !self.attn.is_empty() {
            for head in 0..self.n_heads {
                for role in AttnRole::ALL {
                    out.push(Location::PenultAttn { head, role });
                }
            }
        }
        out
    }

    pub fn is_baseline(&self) -> bool {
        self.config.level == Level::None
    }

    /// Materializes forward-pass callbacks. Basis data is cloned into the
    /// closures so the hooks are `'static`.
    pub fn forward_hooks(&self) -> ForwardHooks {
        let mut hooks = ForwardHooks::none();
        if let Some(basis) = &self.penult_tokens {
            let basis = basis.clone();
            let soft = self.config.n_pen == 1;
            hooks.penult_tokens = Some(Box::new(move |row: &mut [f64]| {
                project_out_inplace(row, &basis, soft);
            }));
        }
        if let Some(basis) = &self.final_cls {
            let basis = basis.clone();
            let soft = self.config.n_fin == 1;
            hooks.final_cls = Some(Box::new(move |row: &mut [f64]| {
                project_out_inplace(row, &basis, soft);
            }));
        }
        if let Some(basis) = &self.sent {
            let basis = basis.clone();
            let soft = self.config.n_p == 1;
            hooks.sent = Some(Box::new(move |row: &mut [f64]| {
                project_out_inplace(row, &basis, soft);
            }));
        }
        if !self.attn.is_empty() {
            let attn = self.attn.clone();
            hooks.penult_attn = Some(Box::new(move |head, role, row: &mut [f64]| {
                let idx = head * 3
                    + match role {
                        AttnRole::Key => 0,
                        AttnRole::Query => 1,
                        AttnRole::Value => 2,
                    };
                // Attention projections are always hard.
                project_out_inplace(row, &attn[idx], false);
            }));
        }
        hooks
    }
}

fn required_basis(
    set: &SubspaceSet,
    location: Location,
    dims: usize,
) -> Result<Basis> {
    let sub: &GenderSubspace = set
        .get(location)
        .ok_or_else(|| Error::MissingSubspace(location.to_string()))?;
    if sub.basis.dim() < dims {
        return Err(Error::SubspaceTooSmall {
            location: location.to_string(),
            available: sub.basis.dim(),
            required: dims,
        });
    }
    Ok(sub.basis.truncated(dims))
}

/// Binds a configuration to estimated subspaces, enforcing the cascade rule:
/// every level at or shallower than `config.level` gets its hook.
pub fn bind(config: DebiasConfig, model: &EncoderModel, set: &SubspaceSet) -> Result<HookSet> {
    let mut hooks = HookSet {
        config,
        sent: None,
        final_cls: None,
        penult_tokens: None,
        attn: Vec::new(),
        n_heads: model.n_heads(),
    };
    if config.level >= Level::Sent {
        hooks.sent = Some(required_basis(set, Location::Sent, 1)?);
    }
    if config.level >= Level::FinalLayer {
        let dims = 1 + config.c_fin as usize;
        hooks.final_cls = Some(required_basis(set, Location::FinalCls, dims)?);
    }
    if config.level >= Level::PenultLayer {
        let dims = 1 + config.c_pen as usize;
        hooks.penult_tokens = Some(required_basis(set, Location::PenultTokens, dims)?);
    }
    if config.level >= Level::PenultAttn {
        for head in 0..model.n_heads() {
            for role in AttnRole::ALL {
                let basis = required_basis(set, Location::PenultAttn { head, role }, 1)?;
                if basis.vector_len() != model.head_dim() {
                    return Err(Error::DimensionMismatch {
                        context: "attention subspace width",
                        expected: model.head_dim(),
                        got: basis.vector_len(),
                    });
                }
                hooks.attn.push(basis);
            }
        }
    }
    if let Some(b) = &hooks.sent {
        if b.vector_len() != model.d_model() {
            return Err(Error::DimensionMismatch {
                context: "sent subspace width",
                expected: model.d_model(),
                got: b.vector_len(),
            });
        }
    }
    Ok(hooks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_gender_pairs;
    use crate::linalg::dot;
    use crate::subspace;
    use crate::synthetic::seeded_model;

    #[test]
    fn grid_has_74_distinct_configs_partitioned_by_level() {
        let grid = enumerate_grid();
        assert_eq!(grid.len(), 74);
        let count = |level: Level| grid.iter().filter(|c| c.level == level).count();
        assert_eq!(count(Level::Sent), 2);
        assert_eq!(count(Level::FinalLayer), 8);
        assert_eq!(count(Level::PenultLayer), 32);
        assert_eq!(count(Level::PenultAttn), 32);
        let unique: std::collections::HashSet<_> = grid.iter().collect();
        assert_eq!(unique.len(), 74);
    }

    #[test]
    fn first_penult_layer_config_is_all_zeros() {
        let grid = enumerate_grid();
        let first = grid
            .iter()
            .find(|c| c.level == Level::PenultLayer)
            .unwrap();
        assert_eq!(
            *first,
            DebiasConfig::penult_layer(0, 0, 0, 0, 0),
        );
        assert_eq!(
            first.to_string(),
            "level=penult_layer n_pen=0 c_pen=0 n_fin=0 c_fin=0 n_p=0"
        );
    }

    #[test]
    fn grid_order_is_level_major_with_last_flag_fastest() {
        let grid = enumerate_grid();
        assert_eq!(grid[0], DebiasConfig::sent(0));
        assert_eq!(grid[1], DebiasConfig::sent(1));
        assert_eq!(grid[2], DebiasConfig::final_layer(0, 0, 0));
        assert_eq!(grid[3], DebiasConfig::final_layer(0, 0, 1));
        assert_eq!(grid[9], DebiasConfig::final_layer(1, 1, 1));
        assert_eq!(grid[10], DebiasConfig::penult_layer(0, 0, 0, 0, 0));
        assert_eq!(grid[11], DebiasConfig::penult_layer(0, 0, 0, 0, 1));
        assert_eq!(grid[41], DebiasConfig::penult_layer(1, 1, 1, 1, 1));
        assert_eq!(grid[42], DebiasConfig::penult_attn(0, 0, 0, 0, 0));
        assert_eq!(grid[73], DebiasConfig::penult_attn(1, 1, 1, 1, 1));
    }

    #[test]
    fn config_text_round_trip_and_unknown_keys() {
        let text = "level=penult_attn n_pen=0 c_pen=0 n_fin=1 c_fin=0 n_p=1";
        let cfg = DebiasConfig::parse_str(text).unwrap();
        assert_eq!(cfg.to_string(), text);

        let err = DebiasConfig::parse_str("level=sent bogus=1").unwrap_err();
        assert!(err.to_string().contains("unknown configuration key"));

        // Flags deeper than the level are accepted and ignored.
        let cfg = DebiasConfig::parse_str("level=sent n_pen=1 n_p=1").unwrap();
        assert_eq!(cfg, DebiasConfig::sent(1));
    }

    #[test]
    fn baseline_hookset_reproduces_raw_trace() {
        let model = seeded_model(2, 8, 2, 2, 32);
        let hooks = HookSet::baseline();
        assert!(hooks.forward_hooks().is_empty());
        let plain = model
            .forward_pair("he went home", "she stayed", &ForwardHooks::none())
            .unwrap();
        let hooked = model
            .forward_pair("he went home", "she stayed", &hooks.forward_hooks())
            .unwrap();
        assert_eq!(plain.sent, hooked.sent);
        assert_eq!(plain.nsp_probs, hooked.nsp_probs);
    }

    #[test]
    fn cascade_installs_all_shallower_hooks() {
        let model = seeded_model(2, 8, 2, 2, 32);
        let pairs = default_gender_pairs();
        let set = SubspaceSet::estimate_all(&model, &pairs).unwrap();
        let hooks = bind(
            DebiasConfig::penult_layer(0, 0, 0, 0, 0),
            &model,
            &set,
        )
        .unwrap();
        let locs = hooks.active_locations();
        assert!(locs.contains(&Location::PenultTokens));
        assert!(locs.contains(&Location::FinalCls));
        assert!(locs.contains(&Location::Sent));

        let attn_hooks = bind(
            DebiasConfig::penult_attn(1, 1, 1, 1, 1),
            &model,
            &set,
        )
        .unwrap();
        assert_eq!(attn_hooks.active_locations().len(), 3 + model.n_heads() * 3);
    }

    #[test]
    fn missing_subspace_is_named() {
        let model = seeded_model(2, 8, 2, 2, 32);
        let pairs = default_gender_pairs();
        let mut set = SubspaceSet::new();
        set.insert(subspace::estimate(&model, &pairs, Location::Sent, 1).unwrap());
        let err = bind(DebiasConfig::final_layer(0, 0, 0), &model, &set).unwrap_err();
        assert!(err.to_string().contains("final_cls"), "{err}");
    }

    #[test]
    fn sent_hard_hook_zeroes_inner_product() {
        let model = seeded_model(2, 8, 2, 2, 32);
        let pairs = default_gender_pairs();
        let set = SubspaceSet::estimate_all(&model, &pairs).unwrap();
        let hooks = bind(DebiasConfig::sent(0), &model, &set).unwrap();
        let trace = model
            .forward_pair("he went home", "she stayed", &hooks.forward_hooks())
            .unwrap();
        let g = &set.get(Location::Sent).unwrap().basis.vectors()[0];
        assert!(dot(&trace.sent, g).abs() < 1e-9);
    }

    #[test]
    fn unit_weights_make_soft_equal_hard() {
        let model = seeded_model(2, 8, 2, 2, 32);
        let pairs = default_gender_pairs();
        let estimated = SubspaceSet::estimate_all(&model, &pairs).unwrap();
        // Rebuild every subspace with all weights forced to 1 (single
        // component per location so the sum stays valid).
        let mut forced = SubspaceSet::new();
        for loc in estimated.locations() {
            let sub = estimated.get(loc).unwrap();
            let basis = Basis::new(vec![sub.basis.vectors()[0].clone()], vec![1.0]).unwrap();
            forced.insert(crate::subspace::GenderSubspace {
                location: loc,
                basis,
            });
        }
        let hard = bind(DebiasConfig::penult_layer(0, 0, 0, 0, 0), &model, &forced).unwrap();
        let soft = bind(DebiasConfig::penult_layer(1, 0, 1, 0, 1), &model, &forced).unwrap();
        let ta = model
            .forward_pair("he went home", "she stayed", &hard.forward_hooks())
            .unwrap();
        let tb = model
            .forward_pair("he went home", "she stayed", &soft.forward_hooks())
            .unwrap();
        for (a, b) in ta.sent.iter().zip(&tb.sent) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in ta.nsp_probs.iter().zip(&tb.nsp_probs) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn attention_hooks_preserve_attention_normalization() {
        let model = seeded_model(2, 8, 2, 2, 32);
        let pairs = default_gender_pairs();
        let set = SubspaceSet::estimate_all(&model, &pairs).unwrap();
        let hooks = bind(DebiasConfig::penult_attn(0, 0, 0, 0, 0), &model, &set).unwrap();
        let trace = model
            .forward_pair("he went home", "she stayed here", &hooks.forward_hooks())
            .unwrap();
        for layer in &trace.attn_weights {
            for head in layer {
                for r in 0..head.rows() {
                    let s: f64 = head.row(r).iter().sum();
                    assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
