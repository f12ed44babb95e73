//! Item price analytics against operator street prices.
//!
//! A vendor pays 70% of the street price, so a sale "succeeds" when its unit
//! price is strictly above that. Street prices are taken as constant over any
//! comparison window. Comparisons are done on integer totals to stay exact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{TimeWindow, Timestamp};
use crate::ingest::{AuctionRecord, StreetPriceTable};
use crate::stats::{adjusted_skewness, mean, median, ols_slope};

/// Vendor payout as a fraction of street price, as `NUM / DEN`.
const VENDOR_NUM: f64 = 7.0;
const VENDOR_DEN: f64 = 10.0;

/// Why an item-level statistic could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ValuationSignal {
    #[error("item has no street price")]
    UnpricedItem,
    #[error("no sales in window")]
    NoData,
    #[error("skewness undefined (fewer than 3 sales or zero variance)")]
    UndefinedSkew,
    #[error("fewer than two time granules with sales")]
    NoTrend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sale {
    pub at: Timestamp,
    pub total_price: u64,
    pub quantity: u32,
}

impl Sale {
    pub fn unit_price(&self) -> f64 {
        self.total_price as f64 / self.quantity as f64
    }

    fn above(&self, fraction_num: f64, fraction_den: f64, street: f64) -> bool {
        self.total_price as f64 * fraction_den > fraction_num * street * self.quantity as f64
    }
}

/// Sold auctions of one item, ascending by time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemPriceSeries {
    pub item_name: String,
    pub sales: Vec<Sale>,
}

impl ItemPriceSeries {
    pub fn new(item_name: impl Into<String>, mut sales: Vec<Sale>) -> Self {
        sales.sort_by_key(|s| s.at);
        ItemPriceSeries {
            item_name: item_name.into(),
            sales,
        }
    }

    pub fn within<'a>(&'a self, window: &'a TimeWindow) -> impl Iterator<Item = &'a Sale> + 'a {
        self.sales.iter().filter(move |s| window.contains(s.at))
    }

    pub fn unit_prices(&self, window: &TimeWindow) -> Vec<f64> {
        self.within(window).map(Sale::unit_price).collect()
    }
}

/// One series per item from the SOLD records, ordered by item name.
pub fn price_series<'a, I>(records: I) -> Vec<ItemPriceSeries>
where
    I: IntoIterator<Item = &'a AuctionRecord>,
{
    let mut by_item: BTreeMap<&str, Vec<Sale>> = BTreeMap::new();
    for r in records.into_iter().filter(|r| r.is_sold()) {
        by_item.entry(r.item_name.as_str()).or_default().push(Sale {
            at: r.created_at,
            total_price: r.total_price,
            quantity: r.quantity,
        });
    }
    by_item
        .into_iter()
        .map(|(item, sales)| ItemPriceSeries::new(item, sales))
        .collect()
}

fn share_above(
    series: &ItemPriceSeries,
    street: &StreetPriceTable,
    window: &TimeWindow,
    num: f64,
    den: f64,
) -> Result<f64, ValuationSignal> {
    let price = street
        .get(&series.item_name)
        .ok_or(ValuationSignal::UnpricedItem)?;
    let mut n = 0u64;
    let mut above = 0u64;
    for s in series.within(window) {
        n += 1;
        above += u64::from(s.above(num, den, price));
    }
    if n == 0 {
        return Err(ValuationSignal::NoData);
    }
    Ok(above as f64 / n as f64)
}

/// Share of sales priced strictly above the vendor payout.
pub fn success_ratio(
    series: &ItemPriceSeries,
    street: &StreetPriceTable,
    window: &TimeWindow,
) -> Result<f64, ValuationSignal> {
    share_above(series, street, window, VENDOR_NUM, VENDOR_DEN)
}

/// Share of sales priced strictly above the street price.
pub fn above_street_share(
    series: &ItemPriceSeries,
    street: &StreetPriceTable,
    window: &TimeWindow,
) -> Result<f64, ValuationSignal> {
    share_above(series, street, window, 1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkewClass {
    StrongRight,
    Mild,
    NoneOrLeft,
}

impl SkewClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SkewClass::StrongRight => "strong-right",
            SkewClass::Mild => "mild",
            SkewClass::NoneOrLeft => "none/left",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendClass {
    Appreciated,
    Depreciated,
    Flat,
}

impl TrendClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TrendClass::Appreciated => "appreciated",
            TrendClass::Depreciated => "depreciated",
            TrendClass::Flat => "flat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValuationParams {
    pub strong_skew_min: f64,
    pub mild_skew_min: f64,
    /// Relative change at or beyond which an item trends up or down.
    pub trend_cutoff: f64,
    pub granule_days: u32,
    pub histogram_width: f64,
}

impl Default for ValuationParams {
    fn default() -> Self {
        ValuationParams {
            strong_skew_min: 2.0,
            mild_skew_min: 0.5,
            trend_cutoff: 0.10,
            granule_days: 7,
            histogram_width: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewResult {
    pub skewness: f64,
    pub class: SkewClass,
}

pub fn classify_skew(prices: &[f64], params: &ValuationParams) -> Result<SkewResult, ValuationSignal> {
    let g = adjusted_skewness(prices).ok_or(ValuationSignal::UndefinedSkew)?;
    let class = if g >= params.strong_skew_min {
        SkewClass::StrongRight
    } else if g >= params.mild_skew_min {
        SkewClass::Mild
    } else {
        SkewClass::NoneOrLeft
    };
    Ok(SkewResult { skewness: g, class })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub relative_change: f64,
    pub class: TrendClass,
    pub granules: usize,
}

/// Fitted change across the window relative to the mean granule median.
///
/// Sales are grouped into granules of `granule_days` counted from the window
/// start (or the first sale for an open window). A least-squares line is fit
/// to granule medians against granule index, and its rise from the first to
/// the last observed granule is divided by the mean of the medians.
pub fn classify_trend(
    series: &ItemPriceSeries,
    window: &TimeWindow,
    params: &ValuationParams,
) -> Result<TrendResult, ValuationSignal> {
    let span = params.granule_days.max(1) as i64 * 86_400;
    let mut sales = series.within(window).peekable();
    let origin = match sales.peek() {
        None => return Err(ValuationSignal::NoTrend),
        Some(first) if window.start == Timestamp::MIN => first.at,
        Some(_) => window.start,
    };
    let mut granules: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for s in sales {
        granules
            .entry((s.at - origin).div_euclid(span))
            .or_default()
            .push(s.unit_price());
    }
    if granules.len() < 2 {
        return Err(ValuationSignal::NoTrend);
    }
    let xs: Vec<f64> = granules.keys().map(|&g| g as f64).collect();
    let medians: Vec<f64> = granules.values().map(|v| median(v)).collect();
    let slope = ols_slope(&xs, &medians).ok_or(ValuationSignal::NoTrend)?;
    let level = mean(&medians);
    let extent = xs[xs.len() - 1] - xs[0];
    let relative_change = if level == 0.0 { 0.0 } else { slope * extent / level };
    Ok(TrendResult {
        relative_change,
        class: trend_class(relative_change, params.trend_cutoff),
        granules: granules.len(),
    })
}

pub fn trend_class(relative_change: f64, cutoff: f64) -> TrendClass {
    if relative_change >= cutoff {
        TrendClass::Appreciated
    } else if relative_change <= -cutoff {
        TrendClass::Depreciated
    } else {
        TrendClass::Flat
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendShares {
    pub window: TimeWindow,
    pub items: usize,
    pub appreciated: f64,
    pub depreciated: f64,
    pub flat: f64,
}

fn trend_shares(series: &[ItemPriceSeries], window: &TimeWindow, params: &ValuationParams) -> TrendShares {
    let mut counts: BTreeMap<TrendClass, usize> = BTreeMap::new();
    for s in series {
        if let Ok(t) = classify_trend(s, window, params) {
            *counts.entry(t.class).or_insert(0) += 1;
        }
    }
    let items: usize = counts.values().sum();
    let share = |c| {
        if items == 0 {
            0.0
        } else {
            counts.get(&c).copied().unwrap_or(0) as f64 / items as f64
        }
    };
    TrendShares {
        window: *window,
        items,
        appreciated: share(TrendClass::Appreciated),
        depreciated: share(TrendClass::Depreciated),
        flat: share(TrendClass::Flat),
    }
}

/// Trend-class distribution per window, over items with at least two
/// granules of sales in that window.
pub fn volatility_summary(
    series: &[ItemPriceSeries],
    window_a: &TimeWindow,
    window_b: &TimeWindow,
    params: &ValuationParams,
) -> [TrendShares; 2] {
    [
        trend_shares(series, window_a, params),
        trend_shares(series, window_b, params),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemValuationReport {
    pub item_name: String,
    /// Sales inside the comparison window.
    pub n_sales: usize,
    pub street_price: Option<f64>,
    pub success_ratio: Option<f64>,
    pub above_street_share: Option<f64>,
    pub skewness: Option<f64>,
    pub skew_class: Option<SkewClass>,
    pub relative_change: Option<f64>,
    pub trend_class: Option<TrendClass>,
}

/// Windows for the valuation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValuationWindows {
    /// Street-price comparison and skewness.
    pub comparison: TimeWindow,
    /// Long-run trend.
    pub trend: TimeWindow,
    /// Final stretch compared against the long-run trend.
    pub final_stretch: TimeWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationSummary {
    pub items: usize,
    pub items_sold_in_comparison: usize,
    pub priced_items: usize,
    /// Share of priced items whose above-street share exceeds one half.
    pub majority_above_street_share: f64,
    pub majority_successful_share: f64,
    pub skew_items: usize,
    pub strong_right_share: f64,
    pub mild_share: f64,
    pub trend_full: TrendShares,
    pub trend_final: TrendShares,
    pub histogram_width: f64,
    /// Counts of priced items per success-ratio bin `[i*w, (i+1)*w)`, the
    /// last bin closed.
    pub success_histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationOutput {
    pub windows: ValuationWindows,
    pub items: Vec<ItemValuationReport>,
    pub summary: ValuationSummary,
}

fn histogram(values: impl Iterator<Item = f64>, width: f64) -> Vec<u64> {
    let bins = (1.0 / width).round().max(1.0) as usize;
    let mut h = vec![0u64; bins];
    for v in values {
        let i = ((v / width).floor() as usize).min(bins - 1);
        h[i] += 1;
    }
    h
}

pub fn valuate(
    series: &[ItemPriceSeries],
    street: &StreetPriceTable,
    windows: &ValuationWindows,
    params: &ValuationParams,
) -> ValuationOutput {
    let items: Vec<ItemValuationReport> = series
        .iter()
        .map(|s| {
            let prices = s.unit_prices(&windows.comparison);
            let skew = classify_skew(&prices, params).ok();
            let trend = classify_trend(s, &windows.trend, params).ok();
            ItemValuationReport {
                item_name: s.item_name.clone(),
                n_sales: prices.len(),
                street_price: street.get(&s.item_name),
                success_ratio: success_ratio(s, street, &windows.comparison).ok(),
                above_street_share: above_street_share(s, street, &windows.comparison).ok(),
                skewness: skew.map(|r| r.skewness),
                skew_class: skew.map(|r| r.class),
                relative_change: trend.map(|t| t.relative_change),
                trend_class: trend.map(|t| t.class),
            }
        })
        .collect();

    let priced: Vec<&ItemValuationReport> = items.iter().filter(|r| r.success_ratio.is_some()).collect();
    let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let majority_above = priced
        .iter()
        .filter(|r| r.above_street_share.is_some_and(|v| v > 0.5))
        .count();
    let majority_success = priced
        .iter()
        .filter(|r| r.success_ratio.is_some_and(|v| v > 0.5))
        .count();
    let skewed: Vec<SkewClass> = items.iter().filter_map(|r| r.skew_class).collect();
    let [trend_full, trend_final] =
        volatility_summary(series, &windows.trend, &windows.final_stretch, params);

    let summary = ValuationSummary {
        items: items.len(),
        items_sold_in_comparison: items.iter().filter(|r| r.n_sales > 0).count(),
        priced_items: priced.len(),
        majority_above_street_share: frac(majority_above, priced.len()),
        majority_successful_share: frac(majority_success, priced.len()),
        skew_items: skewed.len(),
        strong_right_share: frac(
            skewed.iter().filter(|c| **c == SkewClass::StrongRight).count(),
            skewed.len(),
        ),
        mild_share: frac(
            skewed.iter().filter(|c| **c == SkewClass::Mild).count(),
            skewed.len(),
        ),
        trend_full,
        trend_final,
        histogram_width: params.histogram_width,
        success_histogram: histogram(
            priced.iter().filter_map(|r| r.success_ratio),
            params.histogram_width,
        ),
    };
    ValuationOutput {
        windows: *windows,
        items,
        summary,
    }
}
