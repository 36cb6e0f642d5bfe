//! Fused action spaces: groups of primitive actions treated as one.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::semantics;
use crate::data::TrajectoryDataset;
use crate::seed::rng_for;
use crate::{Error, Result};

/// Fused action `i` stands for the primitive ids in `groups[i]`.
///
/// Generated maps are disjoint partitions of `0..M`. Loaded maps only
/// need to cover every primitive; overlapping groups are allowed and the
/// first group containing a primitive wins when relabelling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionMap {
    pub strategy: String,
    pub action_names: Vec<String>,
    pub groups: Vec<Vec<usize>>,
}

impl FusionMap {
    pub fn new(strategy: impl Into<String>, action_names: Vec<String>, groups: Vec<Vec<usize>>) -> Result<Self> {
        let map = Self {
            strategy: strategy.into(),
            action_names,
            groups,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn identity(action_names: Vec<String>) -> Self {
        let groups = (0..action_names.len()).map(|i| vec![i]).collect();
        Self {
            strategy: "identity".into(),
            action_names,
            groups,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.action_names.len();
        if self.groups.is_empty() || self.groups.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("fusion map has an empty group".into()));
        }
        let mut seen = vec![false; m];
        for &id in self.groups.iter().flatten() {
            if id >= m {
                return Err(Error::InvalidAction { id, size: m });
            }
            seen[id] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "primitive action {missing} ({}) is not covered",
                self.action_names[missing]
            )));
        }
        Ok(())
    }

    pub fn primitive_count(&self) -> usize {
        self.action_names.len()
    }

    pub fn fused_count(&self) -> usize {
        self.groups.len()
    }

    /// True when every primitive appears in exactly one group.
    pub fn is_partition(&self) -> bool {
        let mut count = vec![0usize; self.action_names.len()];
        for &id in self.groups.iter().flatten() {
            if id < count.len() {
                count[id] += 1;
            }
        }
        count.iter().all(|&c| c == 1)
    }

    /// Fused id of a primitive: the first group that contains it.
    pub fn fused_id_of(&self, primitive: usize) -> Result<usize> {
        self.groups
            .iter()
            .position(|g| g.contains(&primitive))
            .ok_or_else(|| Error::InvalidArgument(format!("primitive action {primitive} is not covered")))
    }

    pub fn group(&self, fused_id: usize) -> Result<&[usize]> {
        self.groups.get(fused_id).map(Vec::as_slice).ok_or(Error::InvalidAction {
            id: fused_id,
            size: self.groups.len(),
        })
    }

    /// Names of the fused actions, members joined with `|`.
    pub fn fused_names(&self) -> Vec<String> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|&i| self.action_names[i].as_str()).collect::<Vec<_>>().join("|"))
            .collect()
    }

    /// Groups as sorted name sets, sorted; for order-free comparison.
    pub fn normalized_groups(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = self
            .groups
            .iter()
            .map(|g| {
                let mut names: Vec<String> = g.iter().map(|&i| self.action_names[i].clone()).collect();
                names.sort();
                names
            })
            .collect();
        out.sort();
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: Self = serde_json::from_str(text)?;
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Pairs each bare movement `X` with `XFIRE`; everything else stays alone.
pub fn simple_fusion_map(action_names: &[String]) -> Result<FusionMap> {
    let sems = action_names.iter().map(|n| semantics(n)).collect::<Result<Vec<_>>>()?;
    let index_of = |name: &str| action_names.iter().position(|n| n == name);
    let mut assigned = vec![false; action_names.len()];
    let mut groups = Vec::new();
    for (i, name) in action_names.iter().enumerate() {
        if assigned[i] {
            continue;
        }
        let partner = if !sems[i].is_move() {
            None
        } else if sems[i].fire {
            index_of(name.strip_suffix("FIRE").unwrap()).map(|bare| (bare, i))
        } else {
            index_of(&format!("{name}FIRE")).map(|fire| (i, fire))
        };
        let group = match partner {
            Some((bare, fire)) => vec![bare, fire],
            None => vec![i],
        };
        group.iter().for_each(|&g| assigned[g] = true);
        groups.push(group);
    }
    FusionMap::new("simple", action_names.to_vec(), groups)
}

/// Action frequencies over the last `ceil(fraction · total)` transitions,
/// walking episodes in collection order.
pub fn last_percent_distribution(dataset: &TrajectoryDataset, fraction: f64) -> Result<Vec<f64>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside (0, 1]")));
    }
    let tail = (fraction * dataset.total_transitions() as f64).ceil() as usize;
    if tail == 0 {
        return Err(Error::Dataset("empty tail".into()));
    }
    let mut counts = vec![0usize; dataset.action_space_size()];
    dataset
        .episodes()
        .iter()
        .rev()
        .flat_map(|ep| ep.actions().iter().rev())
        .take(tail)
        .for_each(|&a| counts[a as usize] += 1);
    Ok(counts.iter().map(|&c| c as f64 / tail as f64).collect())
}

/// One greedy merge: the two groups and their combined frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub frequency: f64,
}

/// Greedy merging of the two least frequent groups until `target_count`
/// remain. Ties go to the group holding the lower primitive id. Returns
/// the map (groups ordered by smallest member) and the merge sequence.
pub fn frequency_fusion_trace(
    distribution: &[f64],
    target_count: usize,
    action_names: &[String],
) -> Result<(FusionMap, Vec<Merge>)> {
    let m = distribution.len();
    if action_names.len() != m {
        return Err(Error::InvalidArgument(format!(
            "{} action names for {m} frequencies",
            action_names.len()
        )));
    }
    if target_count < 1 || target_count > m {
        return Err(Error::InvalidArgument(format!("target count {target_count} outside 1..={m}")));
    }
    if distribution.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::InvalidArgument("frequencies must be finite and non-negative".into()));
    }
    let mut groups: Vec<(f64, Vec<usize>)> = distribution.iter().enumerate().map(|(i, &f)| (f, vec![i])).collect();
    let mut merges = Vec::new();
    let key = |g: &(f64, Vec<usize>)| (g.0, g.1[0]);
    while groups.len() > target_count {
        groups.sort_by(|a, b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1))
        });
        let (fa, a) = groups.remove(0);
        let (fb, b) = groups.remove(0);
        let mut members = [a.clone(), b.clone()].concat();
        members.sort_unstable();
        merges.push(Merge {
            left: a,
            right: b,
            frequency: fa + fb,
        });
        groups.push((fa + fb, members));
    }
    groups.sort_by_key(|g| g.1[0]);
    let map = FusionMap::new(
        "frequency",
        action_names.to_vec(),
        groups.into_iter().map(|g| g.1).collect(),
    )?;
    Ok((map, merges))
}

pub fn frequency_fusion_map(distribution: &[f64], target_count: usize, action_names: &[String]) -> Result<FusionMap> {
    Ok(frequency_fusion_trace(distribution, target_count, action_names)?.0)
}

/// Replaces every primitive action by its fused id.
pub fn relabel_dataset(dataset: &TrajectoryDataset, map: &FusionMap) -> Result<TrajectoryDataset> {
    if map.primitive_count() != dataset.action_space_size() {
        return Err(Error::InvalidArgument(format!(
            "map covers {} primitives, dataset has {}",
            map.primitive_count(),
            dataset.action_space_size()
        )));
    }
    map.validate()?;
    let lookup = (0..map.primitive_count())
        .map(|p| map.fused_id_of(p).map(|f| f as u8))
        .collect::<Result<Vec<_>>>()?;
    dataset.with_relabelled_actions(map.fused_names(), |a| Ok(lookup[a as usize]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DefuseMode {
    #[default]
    First,
    Uniform {
        seed: u64,
    },
}

/// Maps fused actions back to primitives at execution time.
#[derive(Debug, Clone)]
pub struct Defuser {
    mode: DefuseMode,
    rng: Option<ChaCha8Rng>,
}

impl Defuser {
    pub fn new(mode: DefuseMode) -> Self {
        let rng = match mode {
            DefuseMode::First => None,
            DefuseMode::Uniform { seed } => Some(rng_for(seed, 0xDEF5)),
        };
        Self { mode, rng }
    }

    pub fn mode(&self) -> DefuseMode {
        self.mode
    }

    pub fn defuse(&mut self, fused_id: usize, map: &FusionMap) -> Result<usize> {
        let group = map.group(fused_id)?;
        Ok(match &mut self.rng {
            None => group[0],
            Some(rng) => *group.choose(rng).unwrap(),
        })
    }
}

/// Stateless first-member defusing.
pub fn defuse_action(fused_id: usize, map: &FusionMap) -> Result<usize> {
    Ok(map.group(fused_id)?[0])
}

/// Reference maps and the Hero action distribution.
pub mod reference {
    use super::FusionMap;

    pub const HERO_SIMPLE: &str = include_str!("../fixtures/hero_simple.json");
    pub const HERO_FREQUENCY: &str = include_str!("../fixtures/hero_frequency.json");
    pub const KUNGFUMASTER_SIMPLE: &str = include_str!("../fixtures/kungfumaster_simple.json");
    pub const KUNGFUMASTER_FREQUENCY: &str = include_str!("../fixtures/kungfumaster_frequency.json");
    const HERO_DISTRIBUTION: &str = include_str!("../fixtures/hero_distribution.json");

    pub fn map(name: &str) -> Option<FusionMap> {
        let text = match name {
            "hero-simple" => HERO_SIMPLE,
            "hero-frequency" => HERO_FREQUENCY,
            "kungfumaster-simple" => KUNGFUMASTER_SIMPLE,
            "kungfumaster-frequency" => KUNGFUMASTER_FREQUENCY,
            _ => return None,
        };
        Some(FusionMap::from_json(text).expect("bundled map is valid"))
    }

    pub fn kungfumaster_actions() -> Vec<String> {
        map("kungfumaster-simple").unwrap().action_names
    }

    /// Hero's last-1% action distribution in percent, canonical order.
    pub fn hero_distribution() -> Vec<f64> {
        let table: std::collections::HashMap<String, f64> =
            serde_json::from_str(HERO_DISTRIBUTION).expect("bundled distribution is valid");
        crate::actions::CANONICAL_ACTIONS.iter().map(|n| table[*n]).collect()
    }
}
