//! Per-player behavioral KPIs and descriptive market statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{date_of, format_timestamp, parse_timestamp, Granularity, Timestamp};
use crate::error::{Error, Result};
use crate::ingest::{AuctionRecord, BinnedDataset, ForumPost};
use crate::stats::{mean, std_dev, SdKind};

/// Names of the five clustering features, in feature-vector order.
pub const KPI_FEATURES: [&str; 5] = [
    "total_auctions",
    "avg_auctions_per_active_day",
    "sale_rate",
    "distinct_categories",
    "forum_flag",
];

/// Denominator for the auctions-per-day KPI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayDenominator {
    /// Distinct days on which the player listed at least one auction.
    #[default]
    ActiveDays,
    /// Calendar days in the bin.
    CalendarDays,
}

/// The clustering features of one player in one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerBinKpi {
    pub player_id: String,
    pub bin_index: usize,
    pub total_auctions: u32,
    pub sold: u32,
    pub active_days: u32,
    pub avg_auctions_per_active_day: f64,
    pub sale_rate: f64,
    pub distinct_categories: u32,
    pub forum_flag: bool,
}

impl PlayerBinKpi {
    pub fn features(&self) -> [f64; 5] {
        [
            self.total_auctions as f64,
            self.avg_auctions_per_active_day,
            self.sale_rate,
            self.distinct_categories as f64,
            if self.forum_flag { 1.0 } else { 0.0 },
        ]
    }
}

/// One row per (player, bin) with at least one auction, ordered by bin and
/// then player id.
pub fn compute_kpis(
    binned: &BinnedDataset,
    posts: &[ForumPost],
    denominator: DayDenominator,
) -> Vec<PlayerBinKpi> {
    let mut forum: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); binned.len()];
    for p in posts.iter().filter(|p| p.is_marketplace) {
        if let Some(b) = binned.bin_of(p.posted_at) {
            forum[b].insert(p.player_id.as_str());
        }
    }

    binned
        .records_by_bin
        .par_iter()
        .enumerate()
        .map(|(bin_index, records)| {
            #[derive(Default)]
            struct Acc<'a> {
                total: u32,
                sold: u32,
                days: BTreeSet<NaiveDate>,
                categories: BTreeSet<&'a str>,
            }
            let mut per_player: BTreeMap<&str, Acc> = BTreeMap::new();
            for r in records {
                let acc = per_player.entry(r.player_id.as_str()).or_default();
                acc.total += 1;
                acc.sold += u32::from(r.is_sold());
                acc.days.insert(date_of(r.created_at));
                acc.categories.insert(r.category.as_str());
            }
            let bin = &binned.bins[bin_index];
            let calendar_days = ((bin.end - bin.start) / 86_400).max(1) as u32;
            per_player
                .into_iter()
                .map(|(player, acc)| {
                    let active_days = acc.days.len() as u32;
                    let denom = match denominator {
                        DayDenominator::ActiveDays => active_days,
                        DayDenominator::CalendarDays => calendar_days,
                    };
                    PlayerBinKpi {
                        player_id: player.to_string(),
                        bin_index,
                        total_auctions: acc.total,
                        sold: acc.sold,
                        active_days,
                        avg_auctions_per_active_day: acc.total as f64 / denom as f64,
                        sale_rate: acc.sold as f64 / acc.total as f64,
                        distinct_categories: acc.categories.len() as u32,
                        forum_flag: forum[bin_index].contains(player),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

pub fn write_kpis<W: Write>(out: W, kpis: &[PlayerBinKpi]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for k in kpis {
        w.serialize(k)?;
    }
    w.flush().map_err(|e| Error::io("<output stream>", e))?;
    Ok(())
}

pub fn read_kpis<R: Read>(input: R) -> Result<Vec<PlayerBinKpi>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// How many bins each player took part in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participation {
    pub players: usize,
    pub mean_bins: f64,
    pub sd_bins: f64,
    pub single_bin_share: f64,
}

pub fn participation(kpis: &[PlayerBinKpi], sd: SdKind) -> Participation {
    let mut bins_per_player: HashMap<&str, u32> = HashMap::new();
    for k in kpis {
        *bins_per_player.entry(k.player_id.as_str()).or_insert(0) += 1;
    }
    let mut counts: Vec<u32> = bins_per_player.into_values().collect();
    counts.sort_unstable();
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let singles = counts.iter().filter(|&&c| c == 1).count();
    Participation {
        players: counts.len(),
        mean_bins: mean(&values),
        sd_bins: std_dev(&values, sd),
        single_bin_share: if counts.is_empty() {
            0.0
        } else {
            singles as f64 / counts.len() as f64
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedCount<K> {
    pub key: K,
    pub count: u64,
}

/// Daily, monthly and per-player activity statistics over all records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySummary {
    pub total_records: u64,
    pub first_created_at: Timestamp,
    pub last_created_at: Timestamp,
    pub daily_counts: BTreeMap<NaiveDate, u64>,
    pub monthly_counts: BTreeMap<String, u64>,
    pub mean_daily: f64,
    pub sd_daily: f64,
    pub max_daily: DatedCount<NaiveDate>,
    pub min_daily: DatedCount<NaiveDate>,
    pub mean_monthly: f64,
    pub sd_monthly: f64,
    pub max_monthly: DatedCount<String>,
    pub min_monthly: DatedCount<String>,
    pub per_player_counts: BTreeMap<String, u64>,
    pub per_player_mean: f64,
    pub per_player_sd: f64,
    pub per_player_min: u64,
    pub per_player_max: u64,
    pub overall_sale_rate: f64,
    pub monthly_sale_rate_sd: f64,
    pub per_player_month_sale_rate_mean: f64,
    pub per_player_month_sale_rate_sd: f64,
}

fn extremes<K: Clone + Ord>(counts: &BTreeMap<K, u64>) -> (DatedCount<K>, DatedCount<K>) {
    let mut iter = counts.iter();
    let (k0, c0) = iter.next().expect("non-empty counts");
    let mut max = DatedCount {
        key: k0.clone(),
        count: *c0,
    };
    let mut min = max.clone();
    for (k, &c) in iter {
        if c > max.count {
            max = DatedCount {
                key: k.clone(),
                count: c,
            };
        }
        if c < min.count {
            min = DatedCount {
                key: k.clone(),
                count: c,
            };
        }
    }
    (max, min)
}

fn as_f64(counts: impl Iterator<Item = u64>) -> Vec<f64> {
    counts.map(|c| c as f64).collect()
}

/// Summary over days and UTC months that contain at least one record.
/// Ties for max/min go to the earliest key.
pub fn activity_summary<'a, I>(records: I, sd: SdKind) -> Result<ActivitySummary>
where
    I: IntoIterator<Item = &'a AuctionRecord>,
{
    let mut daily: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    let mut monthly: BTreeMap<String, u64> = BTreeMap::new();
    let mut monthly_sold: BTreeMap<String, u64> = BTreeMap::new();
    let mut per_player: BTreeMap<String, u64> = BTreeMap::new();
    let mut player_month: HashMap<(&str, NaiveDate), (u64, u64)> = HashMap::new();
    let mut sold = 0u64;
    let mut total = 0u64;
    let mut first = Timestamp::MAX;
    let mut last = Timestamp::MIN;

    for r in records {
        total += 1;
        first = first.min(r.created_at);
        last = last.max(r.created_at);
        let day = date_of(r.created_at);
        let month_start = Granularity::Month.floor(day);
        let month = Granularity::Month.label(month_start);
        *daily.entry(day).or_insert(0) += 1;
        if r.is_sold() {
            sold += 1;
            *monthly_sold.entry(month.clone()).or_insert(0) += 1;
        }
        *monthly.entry(month).or_insert(0) += 1;
        match per_player.get_mut(&r.player_id) {
            Some(c) => *c += 1,
            None => {
                per_player.insert(r.player_id.clone(), 1);
            }
        }
        let pm = player_month
            .entry((r.player_id.as_str(), month_start))
            .or_insert((0, 0));
        pm.0 += 1;
        pm.1 += u64::from(r.is_sold());
    }
    if total == 0 {
        return Err(Error::EmptyInput("no auction records to summarize"));
    }

    let daily_values = as_f64(daily.values().copied());
    let monthly_values = as_f64(monthly.values().copied());
    let player_values = as_f64(per_player.values().copied());
    let monthly_rates: Vec<f64> = monthly
        .iter()
        .map(|(m, &c)| monthly_sold.get(m).copied().unwrap_or(0) as f64 / c as f64)
        .collect();
    let mut pm_keys: Vec<_> = player_month.into_iter().collect();
    pm_keys.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let pm_rates: Vec<f64> = pm_keys.iter().map(|(_, (n, s))| *s as f64 / *n as f64).collect();

    let (max_daily, min_daily) = extremes(&daily);
    let (max_monthly, min_monthly) = extremes(&monthly);

    Ok(ActivitySummary {
        total_records: total,
        first_created_at: first,
        last_created_at: last,
        mean_daily: mean(&daily_values),
        sd_daily: std_dev(&daily_values, sd),
        max_daily,
        min_daily,
        mean_monthly: mean(&monthly_values),
        sd_monthly: std_dev(&monthly_values, sd),
        max_monthly,
        min_monthly,
        per_player_mean: mean(&player_values),
        per_player_sd: std_dev(&player_values, sd),
        per_player_min: per_player.values().copied().min().unwrap_or(0),
        per_player_max: per_player.values().copied().max().unwrap_or(0),
        overall_sale_rate: sold as f64 / total as f64,
        monthly_sale_rate_sd: std_dev(&monthly_rates, sd),
        per_player_month_sale_rate_mean: mean(&pm_rates),
        per_player_month_sale_rate_sd: std_dev(&pm_rates, sd),
        daily_counts: daily,
        monthly_counts: monthly,
        per_player_counts: per_player,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareEntry {
    pub name: String,
    pub count: u64,
    pub share: f64,
}

/// Category and item popularity, each sorted by descending count (ties by
/// name).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub total: u64,
    pub categories: Vec<ShareEntry>,
    pub items: Vec<ShareEntry>,
}

impl Concentration {
    pub fn top_category_share(&self, k: usize) -> f64 {
        top_share(&self.categories, self.total, k)
    }

    pub fn top_item_share(&self, k: usize) -> f64 {
        top_share(&self.items, self.total, k)
    }

    pub fn item_share(&self, name: &str) -> Option<f64> {
        self.items.iter().find(|e| e.name == name).map(|e| e.share)
    }
}

fn top_share(entries: &[ShareEntry], total: u64, k: usize) -> f64 {
    let top: u64 = entries.iter().take(k).map(|e| e.count).sum();
    top as f64 / total as f64
}

fn ranked(counts: HashMap<&str, u64>, total: u64) -> Vec<ShareEntry> {
    let mut entries: Vec<ShareEntry> = counts
        .into_iter()
        .map(|(name, count)| ShareEntry {
            name: name.to_string(),
            count,
            share: count as f64 / total as f64,
        })
        .collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.name.cmp(&b.name)));
    entries
}

pub fn concentration<'a, I>(records: I) -> Result<Concentration>
where
    I: IntoIterator<Item = &'a AuctionRecord>,
{
    let mut categories: HashMap<&str, u64> = HashMap::new();
    let mut items: HashMap<&str, u64> = HashMap::new();
    let mut total = 0u64;
    for r in records {
        total += 1;
        *categories.entry(r.category.as_str()).or_insert(0) += 1;
        *items.entry(r.item_name.as_str()).or_insert(0) += 1;
    }
    if total == 0 {
        return Err(Error::EmptyInput("no auction records for concentration"));
    }
    Ok(Concentration {
        total,
        categories: ranked(categories, total),
        items: ranked(items, total),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortKind {
    /// Row n counts players of the join cohort active in their n-th bin since
    /// joining (gaps do not end a row).
    Retention,
    /// Row n counts players of the join cohort active in exactly n bins in
    /// total.
    Tenure,
}

/// Join-cohort matrix. `cells[n - 1][j]` is `None` where join bin `j` plus
/// `n - 1` bins runs past the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMatrix {
    pub kind: CohortKind,
    pub join_labels: Vec<String>,
    pub cells: Vec<Vec<Option<u64>>>,
    pub row_totals: Vec<u64>,
    /// Row totals as a share of the first row's total.
    pub row_shares: Vec<f64>,
}

fn player_bins(binned: &BinnedDataset) -> BTreeMap<&str, Vec<usize>> {
    let mut bins: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (b, players) in binned.players_by_bin.iter().enumerate() {
        for p in players {
            bins.entry(p.as_str()).or_default().push(b);
        }
    }
    bins
}

fn empty_matrix(kind: CohortKind, binned: &BinnedDataset) -> CohortMatrix {
    let n = binned.len();
    let cells = (0..n)
        .map(|row| (0..n).map(|j| (j + row < n).then_some(0)).collect())
        .collect();
    CohortMatrix {
        kind,
        join_labels: binned.bin_labels(),
        cells,
        row_totals: vec![0; n],
        row_shares: vec![0.0; n],
    }
}

fn finish(mut m: CohortMatrix, base: u64) -> CohortMatrix {
    m.row_totals = m.cells.iter().map(|row| row.iter().flatten().sum()).collect();
    m.row_shares = m
        .row_totals
        .iter()
        .map(|&t| if base == 0 { 0.0 } else { t as f64 / base as f64 })
        .collect();
    m
}

pub fn cohort_matrix(binned: &BinnedDataset) -> CohortMatrix {
    let mut m = empty_matrix(CohortKind::Retention, binned);
    for bins in player_bins(binned).values() {
        let join = bins[0];
        for &b in bins {
            let cell = m.cells[b - join][join].as_mut().expect("within data span");
            *cell += 1;
        }
    }
    let base = m.cells.first().map(|r| r.iter().flatten().sum()).unwrap_or(0);
    finish(m, base)
}

/// Players by join bin and number of active bins; shares are of all players.
pub fn tenure_matrix(binned: &BinnedDataset) -> CohortMatrix {
    let mut m = empty_matrix(CohortKind::Tenure, binned);
    let mut players = 0u64;
    for bins in player_bins(binned).values() {
        players += 1;
        let cell = m.cells[bins.len() - 1][bins[0]]
            .as_mut()
            .expect("tenure cannot exceed remaining bins");
        *cell += 1;
    }
    finish(m, players)
}

/// Listing and commission rates effective from an instant onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeeTier {
    pub effective_from: Timestamp,
    pub listing_rate: f64,
    pub commission_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeSchedule {
    pub tiers: Vec<FeeTier>,
}

/// 2012-05-25T00:00:00Z, when commissions were dropped.
pub const COMMISSION_DROP: Timestamp = 1_337_904_000;

impl Default for FeeSchedule {
    fn default() -> Self {
        FeeSchedule {
            tiers: vec![
                FeeTier {
                    effective_from: Timestamp::MIN,
                    listing_rate: 0.03,
                    commission_rate: 0.08,
                },
                FeeTier {
                    effective_from: COMMISSION_DROP,
                    listing_rate: 0.07,
                    commission_rate: 0.0,
                },
            ],
        }
    }
}

const PPM: u128 = 1_000_000;

fn rate_ppm(rate: f64) -> u128 {
    (rate * PPM as f64).round() as u128
}

impl FeeSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.tiers.is_empty() {
            return Err(Error::Config("fee schedule has no tiers".into()));
        }
        for w in self.tiers.windows(2) {
            if w[0].effective_from >= w[1].effective_from {
                return Err(Error::Config("fee tiers must be in ascending order".into()));
            }
        }
        for t in &self.tiers {
            for r in [t.listing_rate, t.commission_rate] {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::Config(format!("fee rate {r} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Tier in force at `ts`; instants before the first tier use the first.
    pub fn tier_at(&self, ts: Timestamp) -> &FeeTier {
        let i = self.tiers.partition_point(|t| t.effective_from <= ts);
        &self.tiers[i.saturating_sub(1)]
    }

    /// `(listing_fee, commission)` in whole currants, rounded down.
    pub fn fees_for(&self, record: &AuctionRecord) -> (u64, u64) {
        let tier = self.tier_at(record.created_at);
        let price = record.total_price as u128;
        let listing = rate_ppm(tier.listing_rate) * price / PPM;
        let commission = if record.is_sold() {
            rate_ppm(tier.commission_rate) * price / PPM
        } else {
            0
        };
        (listing as u64, commission as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeEntry {
    pub record_id: String,
    pub bin_index: usize,
    pub listing_fee: u64,
    pub commission: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinFees {
    pub bin: String,
    pub listing_fees: u64,
    pub commissions: u64,
}

impl BinFees {
    pub fn total(&self) -> u64 {
        self.listing_fees + self.commissions
    }
}

/// Operator fee revenue. Per-record entries are kept in memory only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeLedger {
    #[serde(skip)]
    pub entries: Vec<FeeEntry>,
    pub per_bin: Vec<BinFees>,
}

pub fn operator_fees(binned: &BinnedDataset, schedule: &FeeSchedule) -> FeeLedger {
    let mut entries = Vec::with_capacity(binned.total_records());
    let mut per_bin: Vec<BinFees> = binned
        .bins
        .iter()
        .map(|b| BinFees {
            bin: b.label.clone(),
            listing_fees: 0,
            commissions: 0,
        })
        .collect();
    for (bin_index, records) in binned.records_by_bin.iter().enumerate() {
        for r in records {
            let (listing_fee, commission) = schedule.fees_for(r);
            per_bin[bin_index].listing_fees += listing_fee;
            per_bin[bin_index].commissions += commission;
            entries.push(FeeEntry {
                record_id: r.record_id.clone(),
                bin_index,
                listing_fee,
                commission,
            });
        }
    }
    FeeLedger { entries, per_bin }
}

/// Parses a `YYYY-MM-DD...` instant for fee tiers, accepting the same forms
/// as the ingest parser.
pub fn parse_instant(raw: &str) -> Result<Timestamp> {
    parse_timestamp(raw).ok_or_else(|| Error::Config(format!("unparseable instant `{raw}`")))
}

pub fn describe_tier(t: &FeeTier) -> String {
    let from = if t.effective_from == Timestamp::MIN {
        "start".to_string()
    } else {
        format_timestamp(t.effective_from)
    };
    format!(
        "{from}: listing {}, commission {}",
        t.listing_rate, t.commission_rate
    )
}
