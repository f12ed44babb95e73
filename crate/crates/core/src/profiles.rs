//! Behavioral profile names for clusters.
//!
//! Clusters are named by a fixed rule cascade over their standardized
//! centroid. Activity `A` is the mean quintile of total auctions, auctions
//! per day and distinct categories; `S` is the sale-rate quintile and `F` the
//! forum coordinate. Forum posting is checked first, then activity tiers;
//! within the moderate tier the raw category breadth and posting rate are
//! compared against the medians of the bin's moderate clusters.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::error::{Error, Result};
use crate::metrics::PlayerBinKpi;
use crate::stats::{mean, median, std_dev, SdKind};

const TOTAL: usize = 0;
const PER_DAY: usize = 1;
const SALE_RATE: usize = 2;
const CATEGORIES: usize = 3;
const FORUM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProfileLabel {
    Casual,
    CasualWinners,
    CasualLosers,
    CasualForum,
    Moderate,
    ModerateFarmers,
    ModerateMiscellanea,
    ModerateLosers,
    ModerateWinners,
    Forum,
    Hardcore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Casual,
    Moderate,
    Forum,
    Hardcore,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Casual, Family::Moderate, Family::Forum, Family::Hardcore];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Casual => "Casual",
            Family::Moderate => "Moderate",
            Family::Forum => "Forum",
            Family::Hardcore => "Hardcore",
        }
    }
}

impl ProfileLabel {
    /// Global display order; nodes within a bin always follow it.
    pub const ALL: [ProfileLabel; 11] = [
        ProfileLabel::Casual,
        ProfileLabel::CasualWinners,
        ProfileLabel::CasualLosers,
        ProfileLabel::CasualForum,
        ProfileLabel::Moderate,
        ProfileLabel::ModerateFarmers,
        ProfileLabel::ModerateMiscellanea,
        ProfileLabel::ModerateLosers,
        ProfileLabel::ModerateWinners,
        ProfileLabel::Forum,
        ProfileLabel::Hardcore,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ProfileLabel::Casual => "Casual",
            ProfileLabel::CasualWinners => "CasualWinners",
            ProfileLabel::CasualLosers => "CasualLosers",
            ProfileLabel::CasualForum => "CasualForum",
            ProfileLabel::Moderate => "Moderate",
            ProfileLabel::ModerateFarmers => "ModerateFarmers",
            ProfileLabel::ModerateMiscellanea => "ModerateMiscellanea",
            ProfileLabel::ModerateLosers => "ModerateLosers",
            ProfileLabel::ModerateWinners => "ModerateWinners",
            ProfileLabel::Forum => "Forum",
            ProfileLabel::Hardcore => "Hardcore",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ProfileLabel::Casual => "Casual",
            ProfileLabel::CasualWinners => "Casual Winners",
            ProfileLabel::CasualLosers => "Casual Losers",
            ProfileLabel::CasualForum => "Casual Forum",
            ProfileLabel::Moderate => "Moderate",
            ProfileLabel::ModerateFarmers => "Moderate Farmers",
            ProfileLabel::ModerateMiscellanea => "Moderate Miscellanea",
            ProfileLabel::ModerateLosers => "Moderate Losers",
            ProfileLabel::ModerateWinners => "Moderate Winners",
            ProfileLabel::Forum => "Forum",
            ProfileLabel::Hardcore => "Hardcore",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ProfileLabel::Casual => "Low auction activity with ordinary sales success.",
            ProfileLabel::CasualWinners => "Low auction activity; every auction posted sells.",
            ProfileLabel::CasualLosers => "Low auction activity; at most half of auctions sell.",
            ProfileLabel::CasualForum => "Low auction activity combined with marketplace forum posting.",
            ProfileLabel::Moderate => "Mid-range auction activity.",
            ProfileLabel::ModerateFarmers => {
                "Mid-range activity: many auctions per day in a narrow set of categories."
            }
            ProfileLabel::ModerateMiscellanea => {
                "Mid-range activity: fewer auctions per day spread across many categories."
            }
            ProfileLabel::ModerateLosers => "Mid-range activity with low sales success.",
            ProfileLabel::ModerateWinners => "Mid-range activity with high sales success.",
            ProfileLabel::Forum => "High auction activity combined with marketplace forum posting.",
            ProfileLabel::Hardcore => "Upper bound of all auction activity indicators.",
        }
    }

    pub fn family(self) -> Family {
        match self {
            ProfileLabel::Casual | ProfileLabel::CasualWinners | ProfileLabel::CasualLosers => Family::Casual,
            ProfileLabel::Moderate
            | ProfileLabel::ModerateFarmers
            | ProfileLabel::ModerateMiscellanea
            | ProfileLabel::ModerateLosers
            | ProfileLabel::ModerateWinners => Family::Moderate,
            ProfileLabel::CasualForum | ProfileLabel::Forum => Family::Forum,
            ProfileLabel::Hardcore => Family::Hardcore,
        }
    }

    pub fn order(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ProfileLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for ProfileLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProfileLabel::ALL
            .into_iter()
            .find(|l| l.key() == s || l.display_name() == s)
            .ok_or_else(|| Error::Config(format!("unknown profile label `{s}`")))
    }
}

/// Cut-offs of the labeling cascade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelThresholds {
    /// Activity at or below this is casual.
    pub casual_max_activity: f64,
    /// Activity at or above this is hardcore.
    pub hardcore_min_activity: f64,
    /// Forum coordinate at or above this marks forum posters.
    pub forum_min: f64,
    /// Forum posters at or above this activity are `Forum`, else `CasualForum`.
    pub forum_activity_min: f64,
    /// Raw sale rate at or above this makes casual winners.
    pub casual_winner_min_rate: f64,
    /// Raw sale rate at or below this makes casual losers.
    pub casual_loser_max_rate: f64,
    pub moderate_loser_max_quintile: f64,
    pub moderate_winner_min_quintile: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        LabelThresholds {
            casual_max_activity: 2.0,
            hardcore_min_activity: 4.0,
            forum_min: 3.0,
            forum_activity_min: 3.0,
            casual_winner_min_rate: 1.0,
            casual_loser_max_rate: 0.5,
            moderate_loser_max_quintile: 2.0,
            moderate_winner_min_quintile: 4.0,
        }
    }
}

impl LabelThresholds {
    pub fn validate(&self) -> Result<()> {
        let q = 1.0..=5.0;
        let r = 0.0..=1.0;
        let ok = q.contains(&self.casual_max_activity)
            && q.contains(&self.hardcore_min_activity)
            && self.casual_max_activity < self.hardcore_min_activity
            && q.contains(&self.forum_min)
            && q.contains(&self.forum_activity_min)
            && r.contains(&self.casual_winner_min_rate)
            && r.contains(&self.casual_loser_max_rate)
            && self.casual_loser_max_rate < self.casual_winner_min_rate
            && q.contains(&self.moderate_loser_max_quintile)
            && q.contains(&self.moderate_winner_min_quintile);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("label thresholds out of range: {self:?}")))
        }
    }
}

/// Medians over the bin's moderate clusters of raw category breadth and raw
/// auctions per day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModerateMedians {
    pub categories: f64,
    pub per_day: f64,
}

pub fn activity(standardized: &[f64]) -> f64 {
    (standardized[TOTAL] + standardized[PER_DAY] + standardized[CATEGORIES]) / 3.0
}

fn tier_is_moderate(standardized: &[f64], t: &LabelThresholds) -> bool {
    let a = activity(standardized);
    standardized[FORUM] < t.forum_min && a > t.casual_max_activity && a < t.hardcore_min_activity
}

/// The labeling cascade for one cluster.
pub fn classify(
    standardized: &[f64],
    raw: &[f64],
    moderate: Option<ModerateMedians>,
    t: &LabelThresholds,
) -> ProfileLabel {
    let a = activity(standardized);
    let s = standardized[SALE_RATE];
    if standardized[FORUM] >= t.forum_min {
        return if a >= t.forum_activity_min {
            ProfileLabel::Forum
        } else {
            ProfileLabel::CasualForum
        };
    }
    if a >= t.hardcore_min_activity {
        return ProfileLabel::Hardcore;
    }
    if a > t.casual_max_activity {
        if let Some(med) = moderate {
            let cats = raw[CATEGORIES];
            let rate = raw[PER_DAY];
            if cats < med.categories && rate > med.per_day {
                return ProfileLabel::ModerateFarmers;
            }
            if cats > med.categories && rate < med.per_day {
                return ProfileLabel::ModerateMiscellanea;
            }
        }
        if s <= t.moderate_loser_max_quintile {
            return ProfileLabel::ModerateLosers;
        }
        if s >= t.moderate_winner_min_quintile {
            return ProfileLabel::ModerateWinners;
        }
        return ProfileLabel::Moderate;
    }
    let rate = raw[SALE_RATE];
    if rate >= t.casual_winner_min_rate {
        ProfileLabel::CasualWinners
    } else if rate <= t.casual_loser_max_rate {
        ProfileLabel::CasualLosers
    } else {
        ProfileLabel::Casual
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCluster {
    pub cluster_id: usize,
    pub label: ProfileLabel,
    pub size: usize,
    pub standardized_centroid: Vec<f64>,
    /// Member means of the un-standardized KPIs (forum as a fraction).
    pub raw_centroid: Vec<f64>,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedLabel {
    pub label: ProfileLabel,
    pub cluster_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledClustering {
    pub bin_index: usize,
    pub player_count: usize,
    pub clusters: Vec<LabeledCluster>,
    /// Labels given to more than one cluster; those clusters share a flow node.
    pub merged: Vec<MergedLabel>,
}

impl LabeledClustering {
    /// Player share per label, merged clusters summed.
    pub fn label_shares(&self) -> BTreeMap<ProfileLabel, f64> {
        let mut sizes: BTreeMap<ProfileLabel, usize> = BTreeMap::new();
        for c in &self.clusters {
            *sizes.entry(c.label).or_insert(0) += c.size;
        }
        sizes
            .into_iter()
            .map(|(l, s)| (l, s as f64 / self.player_count as f64))
            .collect()
    }
}

/// Names the clusters of one bin. `kpis` must be the rows the model was fit
/// on, in the same order.
pub fn label_clusters(
    model: &ClusterModel,
    kpis: &[PlayerBinKpi],
    thresholds: &LabelThresholds,
) -> Result<LabeledClustering> {
    if model.assignments.len() != kpis.len() {
        return Err(Error::Invariant(format!(
            "model has {} assignments for {} KPI rows",
            model.assignments.len(),
            kpis.len()
        )));
    }
    let bin_index = kpis.first().map(|k| k.bin_index).unwrap_or(0);
    if kpis.iter().any(|k| k.bin_index != bin_index) {
        return Err(Error::Invariant("KPI rows span more than one bin".into()));
    }

    let k = model.k;
    let mut raw = vec![vec![0.0; 5]; k];
    let mut members: Vec<Vec<String>> = vec![Vec::new(); k];
    for (kpi, &c) in kpis.iter().zip(&model.assignments) {
        for (acc, v) in raw[c].iter_mut().zip(kpi.features()) {
            *acc += v;
        }
        members[c].push(kpi.player_id.clone());
    }
    for (r, m) in raw.iter_mut().zip(&members) {
        if !m.is_empty() {
            r.iter_mut().for_each(|v| *v /= m.len() as f64);
        }
    }

    let moderate: Vec<usize> = (0..k)
        .filter(|&c| !members[c].is_empty() && tier_is_moderate(&model.centroids[c], thresholds))
        .collect();
    let medians = (!moderate.is_empty()).then(|| ModerateMedians {
        categories: median(&moderate.iter().map(|&c| raw[c][CATEGORIES]).collect::<Vec<_>>()),
        per_day: median(&moderate.iter().map(|&c| raw[c][PER_DAY]).collect::<Vec<_>>()),
    });

    let mut clusters = Vec::with_capacity(k);
    for c in 0..k {
        if members[c].is_empty() {
            continue;
        }
        let label = classify(&model.centroids[c], &raw[c], medians, thresholds);
        clusters.push(LabeledCluster {
            cluster_id: c,
            label,
            size: members[c].len(),
            standardized_centroid: model.centroids[c].clone(),
            raw_centroid: raw[c].clone(),
            members: std::mem::take(&mut members[c]),
        });
    }

    let mut by_label: BTreeMap<ProfileLabel, Vec<usize>> = BTreeMap::new();
    for c in &clusters {
        by_label.entry(c.label).or_default().push(c.cluster_id);
    }
    let merged = by_label
        .into_iter()
        .filter(|(_, ids)| ids.len() > 1)
        .map(|(label, cluster_ids)| MergedLabel { label, cluster_ids })
        .collect();

    Ok(LabeledClustering {
        bin_index,
        player_count: kpis.len(),
        clusters,
        merged,
    })
}

/// One row of the cluster-size table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSizeRow {
    pub label: ProfileLabel,
    pub mean_share: f64,
    pub sd_share: f64,
    pub months_manifested: usize,
}

/// Mean and spread of each label's player share over the bins where it
/// appears, in global label order.
pub fn cluster_size_table(labeled: &[LabeledClustering], sd: SdKind) -> Result<Vec<ClusterSizeRow>> {
    if labeled.is_empty() {
        return Err(Error::EmptyInput("no labeled bins"));
    }
    let mut shares: BTreeMap<ProfileLabel, Vec<f64>> = BTreeMap::new();
    for lc in labeled {
        for (label, share) in lc.label_shares() {
            shares.entry(label).or_default().push(share);
        }
    }
    Ok(shares
        .into_iter()
        .map(|(label, s)| ClusterSizeRow {
            label,
            mean_share: mean(&s),
            sd_share: std_dev(&s, sd),
            months_manifested: s.len(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> LabelThresholds {
        LabelThresholds::default()
    }

    fn raw(per_day: f64, rate: f64, cats: f64) -> Vec<f64> {
        vec![10.0, per_day, rate, cats, 0.0]
    }

    #[test]
    fn casual_winners_and_losers() {
        let low = vec![1.0, 1.0, 3.0, 1.0, 1.0];
        assert_eq!(
            classify(&low, &raw(1.0, 1.0, 1.0), None, &t()),
            ProfileLabel::CasualWinners
        );
        assert_eq!(
            classify(&low, &raw(1.0, 0.42, 1.0), None, &t()),
            ProfileLabel::CasualLosers
        );
        assert_eq!(
            classify(&low, &raw(1.0, 0.8, 1.0), None, &t()),
            ProfileLabel::Casual
        );
    }

    #[test]
    fn forum_precedes_hardcore() {
        let top = vec![5.0; 5];
        assert_eq!(
            classify(&top, &raw(9.0, 0.9, 9.0), None, &t()),
            ProfileLabel::Forum
        );
        let casual_forum = vec![1.0, 1.0, 3.0, 1.0, 5.0];
        assert_eq!(
            classify(&casual_forum, &raw(1.0, 0.9, 1.0), None, &t()),
            ProfileLabel::CasualForum
        );
        let hardcore = vec![5.0, 5.0, 3.0, 4.0, 1.0];
        assert_eq!(
            classify(&hardcore, &raw(9.0, 0.9, 9.0), None, &t()),
            ProfileLabel::Hardcore
        );
    }

    #[test]
    fn every_label_is_reachable() {
        let med = Some(ModerateMedians {
            categories: 4.0,
            per_day: 4.0,
        });
        let mid = |s: f64| vec![3.0, 3.0, s, 3.0, 1.0];
        let cases = [
            (
                vec![1.0, 1.0, 3.0, 1.0, 1.0],
                raw(1.0, 0.8, 1.0),
                None,
                ProfileLabel::Casual,
            ),
            (
                vec![1.0, 1.0, 3.0, 1.0, 1.0],
                raw(1.0, 1.0, 1.0),
                None,
                ProfileLabel::CasualWinners,
            ),
            (
                vec![1.0, 1.0, 1.0, 1.0, 1.0],
                raw(1.0, 0.3, 1.0),
                None,
                ProfileLabel::CasualLosers,
            ),
            (
                vec![1.0, 1.0, 3.0, 1.0, 5.0],
                raw(1.0, 0.8, 1.0),
                None,
                ProfileLabel::CasualForum,
            ),
            (mid(3.0), raw(4.0, 0.8, 4.0), med, ProfileLabel::Moderate),
            (mid(3.0), raw(6.0, 0.8, 2.0), med, ProfileLabel::ModerateFarmers),
            (
                mid(3.0),
                raw(2.0, 0.8, 6.0),
                med,
                ProfileLabel::ModerateMiscellanea,
            ),
            (mid(1.0), raw(4.0, 0.3, 4.0), med, ProfileLabel::ModerateLosers),
            (mid(5.0), raw(4.0, 1.0, 4.0), med, ProfileLabel::ModerateWinners),
            (
                vec![4.0, 4.0, 3.0, 4.0, 5.0],
                raw(6.0, 0.8, 6.0),
                None,
                ProfileLabel::Forum,
            ),
            (
                vec![5.0, 4.0, 3.0, 4.0, 1.0],
                raw(6.0, 0.8, 6.0),
                None,
                ProfileLabel::Hardcore,
            ),
        ];
        let mut seen = std::collections::BTreeSet::new();
        for (std_c, raw_c, med, want) in cases {
            assert_eq!(classify(&std_c, &raw_c, med, &t()), want);
            seen.insert(want);
        }
        assert_eq!(seen.len(), 11);
        assert!(Family::ALL.iter().all(|f| seen.iter().any(|l| l.family() == *f)));
    }

    #[test]
    fn labels_parse_from_key_and_name() {
        for l in ProfileLabel::ALL {
            assert_eq!(l.key().parse::<ProfileLabel>().unwrap(), l);
            assert_eq!(l.display_name().parse::<ProfileLabel>().unwrap(), l);
        }
    }

    fn kpi(player: &str, total: u32, rate: f64, cats: u32, forum: bool) -> PlayerBinKpi {
        PlayerBinKpi {
            player_id: player.into(),
            bin_index: 0,
            total_auctions: total,
            sold: (rate * total as f64) as u32,
            active_days: 1,
            avg_auctions_per_active_day: total as f64,
            sale_rate: rate,
            distinct_categories: cats,
            forum_flag: forum,
        }
    }

    fn model(centroids: Vec<Vec<f64>>, assignments: Vec<usize>) -> ClusterModel {
        ClusterModel {
            k: centroids.len(),
            centroids,
            assignments,
            sse: 0.0,
            trace_w: 0.0,
            trace_b: 0.0,
            trace_t: 0.0,
            iterations: 1,
            converged: true,
            restarts_used: 1,
            best_restart: 0,
            seed: 0,
        }
    }

    #[test]
    fn single_cluster_bin() {
        let kpis = vec![kpi("a", 1, 1.0, 1, false), kpi("b", 1, 1.0, 1, false)];
        let m = model(vec![vec![1.0, 1.0, 5.0, 1.0, 1.0]], vec![0, 0]);
        let lc = label_clusters(&m, &kpis, &t()).unwrap();
        assert_eq!(lc.clusters.len(), 1);
        assert_eq!(lc.clusters[0].label, ProfileLabel::CasualWinners);
        assert_eq!(lc.clusters[0].members, vec!["a", "b"]);
        let table = cluster_size_table(&[lc], SdKind::Population).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(
            (table[0].mean_share, table[0].sd_share, table[0].months_manifested),
            (1.0, 0.0, 1)
        );
    }

    #[test]
    fn duplicate_labels_merge() {
        let kpis = vec![
            kpi("a", 1, 1.0, 1, false),
            kpi("b", 1, 1.0, 1, false),
            kpi("c", 90, 0.9, 9, false),
        ];
        let m = model(
            vec![
                vec![1.0, 1.0, 5.0, 1.0, 1.0],
                vec![1.0, 2.0, 5.0, 1.0, 1.0],
                vec![5.0, 5.0, 4.0, 5.0, 1.0],
            ],
            vec![0, 1, 2],
        );
        let lc = label_clusters(&m, &kpis, &t()).unwrap();
        assert_eq!(
            lc.merged,
            vec![MergedLabel {
                label: ProfileLabel::CasualWinners,
                cluster_ids: vec![0, 1]
            }]
        );
        let shares = lc.label_shares();
        assert!((shares.values().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((shares[&ProfileLabel::CasualWinners] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn misaligned_model_is_rejected() {
        let m = model(vec![vec![1.0; 5]], vec![0]);
        assert!(label_clusters(&m, &[], &t()).is_err());
    }

    fn bin_with_share(bin: usize, hardcore: usize, other: usize) -> LabeledClustering {
        let mk = |label, size| LabeledCluster {
            cluster_id: 0,
            label,
            size,
            standardized_centroid: vec![],
            raw_centroid: vec![],
            members: vec![],
        };
        LabeledClustering {
            bin_index: bin,
            player_count: hardcore + other,
            clusters: vec![
                mk(ProfileLabel::Hardcore, hardcore),
                mk(ProfileLabel::Casual, other),
            ],
            merged: vec![],
        }
    }

    #[test]
    fn size_table_two_bins() {
        let bins = [bin_with_share(0, 2, 8), bin_with_share(1, 4, 6)];
        let table = cluster_size_table(&bins, SdKind::Population).unwrap();
        let hc = table.iter().find(|r| r.label == ProfileLabel::Hardcore).unwrap();
        assert!((hc.mean_share - 0.3).abs() < 1e-12);
        assert!((hc.sd_share - 0.1).abs() < 1e-12);
        assert_eq!(hc.months_manifested, 2);
        assert!(cluster_size_table(&[], SdKind::Population).is_err());
    }
}
