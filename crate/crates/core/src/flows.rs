//! Player migration between profiles across bins.
//!
//! A [`FlowGraph`] has one node per (bin, label) and one link per pair of
//! nodes in adjacent bins that share players. Players absent from the next
//! bin count as departing; players absent from the previous bin count as
//! joining. A player who skips a bin departs and later re-joins.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{Family, LabeledClustering, ProfileLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowNode {
    pub node_id: String,
    pub bin_index: usize,
    pub label: ProfileLabel,
    pub size: u64,
    pub joining: u64,
    pub departing: u64,
    pub color: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowLink {
    pub source: String,
    pub target: String,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub bin_labels: Vec<String>,
    /// Active players per bin.
    pub active_per_bin: Vec<u64>,
    /// Bin-major, then global label order.
    pub nodes: Vec<FlowNode>,
    /// Ordered by source node, then target node.
    pub links: Vec<FlowLink>,
}

pub fn node_id(bin: usize, label: ProfileLabel) -> String {
    format!("{bin}-{}", label.key())
}

/// Stable color per label: one hue per family, shaded per sub-label.
pub fn label_color(label: ProfileLabel) -> &'static str {
    match label {
        ProfileLabel::Casual => "#6baed6",
        ProfileLabel::CasualWinners => "#3182bd",
        ProfileLabel::CasualLosers => "#9ecae1",
        ProfileLabel::CasualForum => "#fdae6b",
        ProfileLabel::Moderate => "#74c476",
        ProfileLabel::ModerateFarmers => "#31a354",
        ProfileLabel::ModerateMiscellanea => "#a1d99b",
        ProfileLabel::ModerateLosers => "#c7e9c0",
        ProfileLabel::ModerateWinners => "#006d2c",
        ProfileLabel::Forum => "#e6550d",
        ProfileLabel::Hardcore => "#756bb1",
    }
}

/// Label of every active player, one map per bin.
pub type BinAssignments = Vec<BTreeMap<String, ProfileLabel>>;

/// Collects per-bin player labels, rejecting a player listed twice in a bin.
pub fn assignments_from_labeled(labeled: &[LabeledClustering], bins: usize) -> Result<BinAssignments> {
    let mut out: BinAssignments = vec![BTreeMap::new(); bins];
    for lc in labeled {
        if lc.bin_index >= bins {
            return Err(Error::Invariant(format!(
                "labeled bin {} outside the {bins} data bins",
                lc.bin_index
            )));
        }
        let map = &mut out[lc.bin_index];
        for c in &lc.clusters {
            for p in &c.members {
                if map.insert(p.clone(), c.label).is_some() {
                    return Err(Error::DuplicatePlayer {
                        player: p.clone(),
                        bin: lc.bin_index,
                    });
                }
            }
        }
    }
    Ok(out)
}

pub fn build_flow_graph(labeled: &[LabeledClustering], bin_labels: &[String]) -> Result<FlowGraph> {
    let assignments = assignments_from_labeled(labeled, bin_labels.len())?;
    flow_graph_from_assignments(&assignments, bin_labels)
}

pub fn flow_graph_from_assignments(assignments: &BinAssignments, bin_labels: &[String]) -> Result<FlowGraph> {
    if assignments.len() != bin_labels.len() {
        return Err(Error::Invariant("assignment and bin label counts differ".into()));
    }
    let bins = assignments.len();
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for (t, current) in assignments.iter().enumerate() {
        let prev = t.checked_sub(1).map(|p| &assignments[p]);
        let next = assignments.get(t + 1);
        let mut per_label: BTreeMap<ProfileLabel, (u64, u64, u64)> = BTreeMap::new();
        let mut link_counts: BTreeMap<(ProfileLabel, ProfileLabel), u64> = BTreeMap::new();
        for (player, &label) in current {
            let e = per_label.entry(label).or_insert((0, 0, 0));
            e.0 += 1;
            if !prev.is_some_and(|m| m.contains_key(player)) {
                e.1 += 1;
            }
            match next.and_then(|m| m.get(player)) {
                Some(&to) => *link_counts.entry((label, to)).or_insert(0) += 1,
                None => e.2 += 1,
            }
        }
        for (label, (size, joining, departing)) in per_label {
            nodes.push(FlowNode {
                node_id: node_id(t, label),
                bin_index: t,
                label,
                size,
                joining,
                departing,
                color: label_color(label).to_string(),
                description: label.description().to_string(),
            });
        }
        for ((from, to), value) in link_counts {
            links.push(FlowLink {
                source: node_id(t, from),
                target: node_id(t + 1, to),
                value,
            });
        }
    }
    let graph = FlowGraph {
        bin_labels: bin_labels.to_vec(),
        active_per_bin: assignments.iter().map(|m| m.len() as u64).collect(),
        nodes,
        links,
    };
    debug_assert!(graph.validate().is_ok());
    debug_assert_eq!(graph.bin_labels.len(), bins);
    Ok(graph)
}

impl FlowGraph {
    pub fn node(&self, bin: usize, label: ProfileLabel) -> Option<&FlowNode> {
        self.nodes.iter().find(|n| n.bin_index == bin && n.label == label)
    }

    pub fn bins(&self) -> usize {
        self.bin_labels.len()
    }

    fn link_value(&self, source: &str, target: &str) -> u64 {
        self.links
            .iter()
            .filter(|l| l.source == source && l.target == target)
            .map(|l| l.value)
            .sum()
    }

    fn outgoing(&self, source: &str) -> u64 {
        self.links
            .iter()
            .filter(|l| l.source == source)
            .map(|l| l.value)
            .sum()
    }

    /// Checks id uniqueness, link adjacency, node order and flow
    /// conservation at every node.
    pub fn validate(&self) -> Result<()> {
        let bins = self.bins();
        if self.active_per_bin.len() != bins {
            return Err(Error::Invariant(
                "active_per_bin length differs from bin count".into(),
            ));
        }
        let mut by_id: HashMap<&str, &FlowNode> = HashMap::new();
        for n in &self.nodes {
            if n.bin_index >= bins {
                return Err(Error::Invariant(format!("node {} outside bin range", n.node_id)));
            }
            if by_id.insert(n.node_id.as_str(), n).is_some() {
                return Err(Error::Invariant(format!("duplicate node id {}", n.node_id)));
            }
            if n.joining > n.size || n.departing > n.size {
                return Err(Error::Invariant(format!(
                    "node {} joining/departing exceed size",
                    n.node_id
                )));
            }
        }
        for w in self.nodes.windows(2) {
            if (w[0].bin_index, w[0].label.order()) >= (w[1].bin_index, w[1].label.order()) {
                return Err(Error::Invariant("nodes out of bin/label order".into()));
            }
        }
        let mut incoming: HashMap<&str, u64> = HashMap::new();
        let mut outgoing: HashMap<&str, u64> = HashMap::new();
        for l in &self.links {
            let (Some(s), Some(t)) = (by_id.get(l.source.as_str()), by_id.get(l.target.as_str())) else {
                return Err(Error::Invariant(format!(
                    "link {} -> {} has a dangling end",
                    l.source, l.target
                )));
            };
            if s.bin_index + 1 != t.bin_index {
                return Err(Error::Invariant(format!(
                    "link {} -> {} skips bins",
                    l.source, l.target
                )));
            }
            if l.value == 0 {
                return Err(Error::Invariant(format!(
                    "zero-valued link {} -> {}",
                    l.source, l.target
                )));
            }
            *incoming.entry(l.target.as_str()).or_insert(0) += l.value;
            *outgoing.entry(l.source.as_str()).or_insert(0) += l.value;
        }
        let mut totals = vec![0u64; bins];
        for n in &self.nodes {
            let inc = incoming.get(n.node_id.as_str()).copied().unwrap_or(0);
            let out = outgoing.get(n.node_id.as_str()).copied().unwrap_or(0);
            if n.size != n.joining + inc || n.size != n.departing + out {
                return Err(Error::Invariant(format!(
                    "flow not conserved at node {}",
                    n.node_id
                )));
            }
            totals[n.bin_index] += n.size;
        }
        if totals != self.active_per_bin {
            return Err(Error::Invariant(
                "node sizes do not sum to active players per bin".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionPoint {
    pub bin_index: usize,
    pub active: u64,
    pub retained: u64,
    pub rate: f64,
}

/// Share of each bin's players also active in the next bin. The final bin
/// has no successor and is omitted.
pub fn retention_series(players_by_bin: &[BTreeSet<String>]) -> Vec<RetentionPoint> {
    players_by_bin
        .windows(2)
        .enumerate()
        .map(|(t, w)| {
            let active = w[0].len() as u64;
            let retained = w[0].intersection(&w[1]).count() as u64;
            RetentionPoint {
                bin_index: t,
                active,
                retained,
                rate: if active == 0 {
                    0.0
                } else {
                    retained as f64 / active as f64
                },
            }
        })
        .collect()
}

fn mean_ratio(pairs: impl Iterator<Item = (u64, u64)>) -> Option<f64> {
    let ratios: Vec<f64> = pairs
        .filter(|&(_, eligible)| eligible > 0)
        .map(|(stay, eligible)| stay as f64 / eligible as f64)
        .collect();
    (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Mean over bins of the share of a label's continuing players who keep the
/// label in the next bin.
pub fn insularity(graph: &FlowGraph, label: ProfileLabel) -> Result<f64> {
    let pairs = (0..graph.bins().saturating_sub(1)).filter_map(|t| {
        let node = graph.node(t, label)?;
        let stay = graph.link_value(&node.node_id, &node_id(t + 1, label));
        Some((stay, graph.outgoing(&node.node_id)))
    });
    mean_ratio(pairs).ok_or_else(|| Error::LabelNotManifested(label.key().to_string()))
}

/// Insularity at family level: staying anywhere within the family counts.
pub fn family_insularity(graph: &FlowGraph, family: Family) -> Result<f64> {
    let in_family = |id: &str| {
        graph
            .nodes
            .iter()
            .find(|n| n.node_id == id)
            .is_some_and(|n| n.label.family() == family)
    };
    let pairs = (0..graph.bins().saturating_sub(1)).filter_map(|t| {
        let sources: Vec<&FlowNode> = graph
            .nodes
            .iter()
            .filter(|n| n.bin_index == t && n.label.family() == family)
            .collect();
        if sources.is_empty() {
            return None;
        }
        let mut stay = 0;
        let mut eligible = 0;
        for l in &graph.links {
            if sources.iter().any(|s| s.node_id == l.source) {
                eligible += l.value;
                if in_family(&l.target) {
                    stay += l.value;
                }
            }
        }
        Some((stay, eligible))
    });
    mean_ratio(pairs).ok_or_else(|| Error::LabelNotManifested(family.as_str().to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsularityRow {
    /// `"label"` or `"family"`.
    pub level: String,
    pub group: String,
    /// `None` where the group never has a continuing player.
    pub insularity: Option<f64>,
}

/// Insularity for every label, then every family.
pub fn insularity_table(graph: &FlowGraph) -> Vec<InsularityRow> {
    let labels = ProfileLabel::ALL.iter().map(|&l| InsularityRow {
        level: "label".into(),
        group: l.key().into(),
        insularity: insularity(graph, l).ok(),
    });
    let families = Family::ALL.iter().map(|&f| InsularityRow {
        level: "family".into(),
        group: f.as_str().into(),
        insularity: family_insularity(graph, f).ok(),
    });
    labels.chain(families).collect()
}

/// Each player's labels over the bins they were active in.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectories {
    pub players: BTreeMap<String, Vec<(usize, ProfileLabel)>>,
}

impl Trajectories {
    pub fn from_assignments(assignments: &BinAssignments) -> Self {
        let mut players: BTreeMap<String, Vec<(usize, ProfileLabel)>> = BTreeMap::new();
        for (t, map) in assignments.iter().enumerate() {
            for (p, &l) in map {
                players.entry(p.clone()).or_default().push((t, l));
            }
        }
        Trajectories { players }
    }

    pub fn from_labeled(labeled: &[LabeledClustering], bins: usize) -> Result<Self> {
        Ok(Self::from_assignments(&assignments_from_labeled(labeled, bins)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRow {
    pub group: String,
    pub players: u64,
    pub mean_months: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lifetimes {
    pub by_label: Vec<LifetimeRow>,
    pub by_family: Vec<LifetimeRow>,
}

impl Lifetimes {
    pub fn family(&self, family: Family) -> Option<f64> {
        self.by_family
            .iter()
            .find(|r| r.group == family.as_str())
            .map(|r| r.mean_months)
    }
}

/// Mean active bins per player, grouped by the label of the player's first
/// bin.
pub fn lifetime_stats(traj: &Trajectories) -> Lifetimes {
    let mut by_label: BTreeMap<ProfileLabel, (u64, u64)> = BTreeMap::new();
    let mut by_family: BTreeMap<Family, (u64, u64)> = BTreeMap::new();
    for history in traj.players.values() {
        let entry = history[0].1;
        let months = history.len() as u64;
        for acc in [
            by_label.entry(entry).or_insert((0, 0)),
            by_family.entry(entry.family()).or_insert((0, 0)),
        ] {
            acc.0 += 1;
            acc.1 += months;
        }
    }
    let row = |group: &str, (players, months): (u64, u64)| LifetimeRow {
        group: group.to_string(),
        players,
        mean_months: months as f64 / players as f64,
    };
    Lifetimes {
        by_label: by_label.into_iter().map(|(l, v)| row(l.key(), v)).collect(),
        by_family: by_family.into_iter().map(|(f, v)| row(f.as_str(), v)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenureRow {
    pub tenure: usize,
    pub players: u64,
    pub mean_distinct_labels: f64,
}

/// Mean number of distinct labels a player carried, by number of active bins.
pub fn distinct_clusters_by_tenure(traj: &Trajectories) -> Vec<TenureRow> {
    let mut acc: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for history in traj.players.values() {
        let distinct = history.iter().map(|(_, l)| *l).collect::<BTreeSet<_>>().len() as u64;
        let e = acc.entry(history.len()).or_insert((0, 0));
        e.0 += 1;
        e.1 += distinct;
    }
    acc.into_iter()
        .map(|(tenure, (players, distinct))| TenureRow {
            tenure,
            players,
            mean_distinct_labels: distinct as f64 / players as f64,
        })
        .collect()
}

/// Mean distinct labels over all players with at least `min_tenure` bins.
pub fn mean_distinct_labels_from(rows: &[TenureRow], min_tenure: usize) -> Option<f64> {
    let (players, total) = rows
        .iter()
        .filter(|r| r.tenure >= min_tenure)
        .fold((0u64, 0.0), |(p, t), r| {
            (p + r.players, t + r.mean_distinct_labels * r.players as f64)
        });
    (players > 0).then(|| total / players as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryExitRow {
    pub label: ProfileLabel,
    pub entries: u64,
    pub exits: u64,
    pub entry_share: f64,
    pub exit_share: f64,
}

/// Distribution of first-bin and last-bin labels over players.
pub fn entry_exit_distribution(traj: &Trajectories) -> Vec<EntryExitRow> {
    let mut counts: BTreeMap<ProfileLabel, (u64, u64)> = BTreeMap::new();
    for history in traj.players.values() {
        counts.entry(history[0].1).or_insert((0, 0)).0 += 1;
        counts.entry(history[history.len() - 1].1).or_insert((0, 0)).1 += 1;
    }
    let n = traj.players.len() as f64;
    counts
        .into_iter()
        .map(|(label, (entries, exits))| EntryExitRow {
            label,
            entries,
            exits,
            entry_share: entries as f64 / n,
            exit_share: exits as f64 / n,
        })
        .collect()
}

/// Entry and exit shares summed per family.
pub fn family_entry_exit(rows: &[EntryExitRow]) -> BTreeMap<Family, (f64, f64)> {
    let mut out = BTreeMap::new();
    for r in rows {
        let e = out.entry(r.label.family()).or_insert((0.0, 0.0));
        e.0 += r.entry_share;
        e.1 += r.exit_share;
    }
    out
}
