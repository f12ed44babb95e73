//! Flat-key TOML configuration for a pipeline run.
//!
//! Every key except `auctions` and `seed` has a default. Relative paths are
//! resolved against the directory holding the config file. Unknown keys are
//! rejected so typos do not silently fall back to defaults.
//!
//! ```toml
//! auctions = "auctions.csv"
//! forum = "forum.csv"            # optional
//! street_prices = "street.csv"   # optional
//! output_dir = "out"
//! seed = 20121209
//! granularity = "month"
//! k_min = 2
//! k_max = 12
//! wb_threshold = 0.3
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calendar::{Granularity, TimeWindow, Timestamp};
use crate::clustering::KSelectOptions;
use crate::error::{Error, Result};
use crate::ingest::{ForumOptions, MarketplaceFilter, SchemaMap};
use crate::metrics::{parse_instant, DayDenominator, FeeSchedule, FeeTier};
use crate::profiles::LabelThresholds;
use crate::stats::SdKind;
use crate::valuation::ValuationParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub auctions: Option<PathBuf>,
    pub forum: Option<PathBuf>,
    pub street_prices: Option<PathBuf>,
    /// Snapshot date recorded with the street price table.
    pub street_price_date: Option<String>,
    pub output_dir: PathBuf,
    /// Single character.
    pub delimiter: String,

    pub col_record_id: Option<String>,
    pub col_player_id: String,
    pub col_created_at: String,
    pub col_expires_at: String,
    pub col_item_name: String,
    pub col_category: String,
    pub col_quantity: String,
    pub col_total_price: String,
    pub col_tool_uses: Option<String>,
    pub col_tool_capacity: Option<String>,
    pub col_outcome: String,

    pub forum_player_id: String,
    pub forum_posted_at: String,
    pub forum_comment_index: String,
    /// Boolean column marking marketplace posts.
    pub forum_flag_column: Option<String>,
    /// Comment identifiers counted as marketplace posts.
    pub forum_allowlist: Option<Vec<String>>,
    pub study_start: Option<String>,
    pub study_end: Option<String>,

    pub granularity: Granularity,
    pub day_denominator: DayDenominator,
    pub sd: SdKind,

    pub seed: Option<u64>,
    pub k_min: usize,
    pub k_max: usize,
    pub wb_threshold: f64,
    pub restarts: usize,
    pub max_iter: usize,

    #[serde(flatten)]
    pub labels: LabelThresholds,

    pub commission_drop: String,
    pub listing_rate_before: f64,
    pub commission_rate_before: f64,
    pub listing_rate_after: f64,
    pub commission_rate_after: f64,

    #[serde(flatten)]
    pub valuation: ValuationParams,
    /// Days before the last record covered by the street-price comparison.
    pub comparison_days: u32,
    /// Days before the last record covered by the final-stretch trend.
    pub final_days: u32,
    pub comparison_start: Option<String>,
    pub comparison_end: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let schema = SchemaMap::default();
        let sel = KSelectOptions::new(0);
        PipelineConfig {
            auctions: None,
            forum: None,
            street_prices: None,
            street_price_date: None,
            output_dir: PathBuf::from("out"),
            delimiter: ",".into(),
            col_record_id: schema.record_id,
            col_player_id: schema.player_id,
            col_created_at: schema.created_at,
            col_expires_at: schema.expires_at,
            col_item_name: schema.item_name,
            col_category: schema.category,
            col_quantity: schema.quantity,
            col_total_price: schema.total_price,
            col_tool_uses: schema.tool_uses,
            col_tool_capacity: schema.tool_capacity,
            col_outcome: schema.outcome,
            forum_player_id: "player_id".into(),
            forum_posted_at: "posted_at".into(),
            forum_comment_index: "comment_index".into(),
            forum_flag_column: None,
            forum_allowlist: None,
            study_start: None,
            study_end: None,
            granularity: Granularity::Month,
            day_denominator: DayDenominator::ActiveDays,
            sd: SdKind::Population,
            seed: None,
            k_min: sel.k_min,
            k_max: sel.k_max,
            wb_threshold: sel.threshold,
            restarts: sel.restarts,
            max_iter: sel.max_iter,
            labels: LabelThresholds::default(),
            commission_drop: "2012-05-25T00:00:00Z".into(),
            listing_rate_before: 0.03,
            commission_rate_before: 0.08,
            listing_rate_after: 0.07,
            commission_rate_after: 0.0,
            valuation: ValuationParams::default(),
            comparison_days: 91,
            final_days: 28,
            comparison_start: None,
            comparison_end: None,
        }
    }
}

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| cfg(e.to_string()))?;
        let parsed: PipelineConfig = raw
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| cfg(e.to_string()))?;
        let known: BTreeSet<String> = toml::Table::try_from(&parsed)
            .map_err(|e| cfg(e.to_string()))?
            .keys()
            .cloned()
            .collect();
        let unknown: Vec<&str> = raw
            .keys()
            .filter(|k| !known.contains(*k))
            .map(String::as_str)
            .collect();
        if !unknown.is_empty() {
            return Err(cfg(format!("unknown config keys: {}", unknown.join(", "))));
        }
        Ok(parsed)
    }

    /// Read a config file and resolve its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.auctions, &mut c.forum, &mut c.street_prices]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if c.output_dir.is_relative() {
            c.output_dir = base.join(&c.output_dir);
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(cfg("`seed` is required (config key or --seed)"));
        }
        self.delimiter_byte()?;
        if self.k_min < 1 || self.k_min > self.k_max {
            return Err(cfg(format!(
                "k range {}..={} is empty or starts below 1",
                self.k_min, self.k_max
            )));
        }
        if !(self.wb_threshold > 0.0 && self.wb_threshold.is_finite()) {
            return Err(cfg("wb_threshold must be positive"));
        }
        if self.restarts == 0 || self.max_iter == 0 {
            return Err(cfg("restarts and max_iter must be at least 1"));
        }
        self.labels.validate()?;
        self.fee_schedule()?.validate()?;
        let v = &self.valuation;
        if v.mild_skew_min > v.strong_skew_min || v.mild_skew_min.is_nan() {
            return Err(cfg("mild_skew_min must not exceed strong_skew_min"));
        }
        if !(v.trend_cutoff > 0.0 && v.trend_cutoff < 1.0) {
            return Err(cfg("trend_cutoff must lie in (0, 1)"));
        }
        if v.granule_days == 0 {
            return Err(cfg("granule_days must be at least 1"));
        }
        if !(v.histogram_width > 0.0 && v.histogram_width <= 1.0) {
            return Err(cfg("histogram_width must lie in (0, 1]"));
        }
        if self.comparison_days == 0 || self.final_days == 0 {
            return Err(cfg("comparison_days and final_days must be at least 1"));
        }
        self.study_window()?;
        self.explicit_comparison()?;
        if self.forum_flag_column.is_some() && self.forum_allowlist.is_some() {
            return Err(cfg("set at most one of forum_flag_column and forum_allowlist"));
        }
        Ok(())
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| cfg("`seed` is required (config key or --seed)"))
    }

    pub fn auctions_path(&self) -> Result<&Path> {
        self.auctions
            .as_deref()
            .ok_or_else(|| cfg("`auctions` input path is required"))
    }

    pub fn delimiter_byte(&self) -> Result<u8> {
        match self.delimiter.as_bytes() {
            [b] => Ok(*b),
            _ if self.delimiter == "\\t" => Ok(b'\t'),
            _ => Err(cfg(format!(
                "delimiter `{}` must be one ASCII character",
                self.delimiter
            ))),
        }
    }

    pub fn schema(&self) -> SchemaMap {
        SchemaMap {
            record_id: self.col_record_id.clone(),
            player_id: self.col_player_id.clone(),
            created_at: self.col_created_at.clone(),
            expires_at: self.col_expires_at.clone(),
            item_name: self.col_item_name.clone(),
            category: self.col_category.clone(),
            quantity: self.col_quantity.clone(),
            total_price: self.col_total_price.clone(),
            tool_uses: self.col_tool_uses.clone(),
            tool_capacity: self.col_tool_capacity.clone(),
            outcome: self.col_outcome.clone(),
        }
    }

    pub fn study_window(&self) -> Result<Option<TimeWindow>> {
        window(self.study_start.as_deref(), self.study_end.as_deref())
    }

    fn explicit_comparison(&self) -> Result<Option<TimeWindow>> {
        window(self.comparison_start.as_deref(), self.comparison_end.as_deref())
    }

    pub fn forum_options(&self) -> Result<ForumOptions> {
        let filter = match (&self.forum_flag_column, &self.forum_allowlist) {
            (Some(col), _) => MarketplaceFilter::FlagColumn(col.clone()),
            (None, Some(ids)) => MarketplaceFilter::Allowlist(ids.iter().cloned().collect()),
            (None, None) => MarketplaceFilter::All,
        };
        Ok(ForumOptions {
            player_id: self.forum_player_id.clone(),
            posted_at: self.forum_posted_at.clone(),
            comment_index: self.forum_comment_index.clone(),
            filter,
            study_window: self.study_window()?,
        })
    }

    pub fn k_select(&self) -> Result<KSelectOptions> {
        Ok(KSelectOptions {
            k_min: self.k_min,
            k_max: self.k_max,
            threshold: self.wb_threshold,
            restarts: self.restarts,
            seed: self.seed()?,
            max_iter: self.max_iter,
        })
    }

    pub fn fee_schedule(&self) -> Result<FeeSchedule> {
        Ok(FeeSchedule {
            tiers: vec![
                FeeTier {
                    effective_from: Timestamp::MIN,
                    listing_rate: self.listing_rate_before,
                    commission_rate: self.commission_rate_before,
                },
                FeeTier {
                    effective_from: parse_instant(&self.commission_drop)?,
                    listing_rate: self.listing_rate_after,
                    commission_rate: self.commission_rate_after,
                },
            ],
        })
    }

    /// Comparison window: the explicit bounds if given, else the trailing
    /// `comparison_days` ending just after `last`.
    pub fn comparison_window(&self, last: Timestamp) -> Result<TimeWindow> {
        Ok(match self.explicit_comparison()? {
            Some(w) => w,
            None => trailing(last, self.comparison_days),
        })
    }

    pub fn final_window(&self, last: Timestamp) -> TimeWindow {
        trailing(last, self.final_days)
    }
}

fn trailing(last: Timestamp, days: u32) -> TimeWindow {
    let end = last + 1;
    TimeWindow::new(end - days as i64 * 86_400, end)
}

fn window(start: Option<&str>, end: Option<&str>) -> Result<Option<TimeWindow>> {
    if start.is_none() && end.is_none() {
        return Ok(None);
    }
    let s = start.map(parse_instant).transpose()?.unwrap_or(Timestamp::MIN);
    let e = end.map(parse_instant).transpose()?.unwrap_or(Timestamp::MAX);
    if s >= e {
        return Err(cfg("window start must precede its end"));
    }
    Ok(Some(TimeWindow::new(s, e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = PipelineConfig::from_toml("auctions = \"a.csv\"\nseed = 7\n").unwrap();
        c.validate().unwrap();
        assert_eq!(c.k_select().unwrap().k_max, 12);
        assert_eq!(c.labels, LabelThresholds::default());
        assert_eq!(c.fee_schedule().unwrap(), FeeSchedule::default());
        assert_eq!(c.delimiter_byte().unwrap(), b',');
    }

    #[test]
    fn seed_is_mandatory() {
        let c = PipelineConfig::from_toml("auctions = \"a.csv\"\n").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn flattened_keys_and_unknown_keys() {
        let c =
            PipelineConfig::from_toml("seed = 1\nhardcore_min_activity = 4.5\ntrend_cutoff = 0.2\n").unwrap();
        assert_eq!(c.labels.hardcore_min_activity, 4.5);
        assert_eq!(c.valuation.trend_cutoff, 0.2);
        let err = PipelineConfig::from_toml("seed = 1\nk_maxx = 3\n").unwrap_err();
        assert!(err.to_string().contains("k_maxx"));
    }

    #[test]
    fn out_of_range_values_rejected() {
        for bad in [
            "k_min = 5\nk_max = 3",
            "wb_threshold = 0.0",
            "trend_cutoff = 1.5",
            "delimiter = \";;\"",
            "restarts = 0",
        ] {
            let c = PipelineConfig::from_toml(&format!("seed = 1\n{bad}\n")).unwrap();
            assert!(c.validate().is_err(), "{bad}");
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let c = PipelineConfig {
            seed: Some(3),
            forum_allowlist: Some(vec!["12".into()]),
            ..PipelineConfig::default()
        };
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn trailing_windows() {
        let c = PipelineConfig::default();
        let w = c.final_window(100 * 86_400);
        assert!(w.contains(100 * 86_400));
        assert!(!w.contains(72 * 86_400));
        assert!(w.contains(72 * 86_400 + 1));
    }
}
