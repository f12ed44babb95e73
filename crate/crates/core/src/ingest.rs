//! Parsing of auction, forum and street-price tables, and calendar binning.
//!
//! Malformed rows are skipped and tallied in an [`IssueReport`]; only
//! configuration problems (a required column missing from the header) and
//! I/O failures abort a parse.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::{bins_covering, parse_timestamp, CalendarBin, Granularity, TimeWindow, Timestamp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Sold,
    Expired,
    Deleted,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Sold => "sold",
            Outcome::Expired => "expired",
            Outcome::Deleted => "deleted",
        }
    }
}

impl FromStr for Outcome {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sold" => Ok(Outcome::Sold),
            "expired" => Ok(Outcome::Expired),
            "deleted" => Ok(Outcome::Deleted),
            _ => Err(()),
        }
    }
}

/// One auction listing and its final outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionRecord {
    pub record_id: String,
    pub player_id: String,
    pub created_at: Timestamp,
    pub expires_at: Timestamp,
    pub item_name: String,
    pub category: String,
    pub quantity: u32,
    /// Total listing price in currants.
    pub total_price: u64,
    pub tool_uses: Option<u32>,
    pub tool_capacity: Option<u32>,
    pub outcome: Outcome,
}

impl AuctionRecord {
    pub fn unit_price(&self) -> f64 {
        self.total_price as f64 / self.quantity as f64
    }

    pub fn is_sold(&self) -> bool {
        self.outcome == Outcome::Sold
    }
}

/// Reasons a row can be rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    MalformedRow,
    MissingField,
    BadTimestamp,
    BadNumber,
    BadOutcome,
    NegativePrice,
    ZeroQuantity,
    ExpiresBeforeCreated,
    NonpositivePrice,
    DuplicateItem,
    OutsideStudyWindow,
}

impl IssueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueKind::MalformedRow => "malformed_row",
            IssueKind::MissingField => "missing_field",
            IssueKind::BadTimestamp => "bad_timestamp",
            IssueKind::BadNumber => "bad_number",
            IssueKind::BadOutcome => "bad_outcome",
            IssueKind::NegativePrice => "negative_price",
            IssueKind::ZeroQuantity => "zero_quantity",
            IssueKind::ExpiresBeforeCreated => "expires_before_created",
            IssueKind::NonpositivePrice => "nonpositive_price",
            IssueKind::DuplicateItem => "duplicate_item",
            IssueKind::OutsideStudyWindow => "outside_study_window",
        }
    }
}

/// Per-reason counts of rows that were skipped or flagged during a parse.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueReport {
    pub counts: BTreeMap<IssueKind, usize>,
}

impl IssueReport {
    pub fn record(&mut self, kind: IssueKind) {
        *self.counts.entry(kind).or_insert(0) += 1;
    }

    pub fn count(&self, kind: IssueKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn merge(&mut self, other: &IssueReport) {
        for (k, v) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += v;
        }
    }
}

impl fmt::Display for IssueReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.counts.is_empty() {
            return f.write_str("no issues");
        }
        let parts: Vec<String> = self
            .counts
            .iter()
            .map(|(k, v)| format!("{}: {v}", k.as_str()))
            .collect();
        write!(f, "{} rows with issues ({})", self.total(), parts.join(", "))
    }
}

/// Binds each auction field to a column name in the input header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaMap {
    pub record_id: Option<String>,
    pub player_id: String,
    pub created_at: String,
    pub expires_at: String,
    pub item_name: String,
    pub category: String,
    pub quantity: String,
    pub total_price: String,
    pub tool_uses: Option<String>,
    pub tool_capacity: Option<String>,
    pub outcome: String,
}

impl Default for SchemaMap {
    fn default() -> Self {
        SchemaMap {
            record_id: Some("record_id".into()),
            player_id: "player_id".into(),
            created_at: "created_at".into(),
            expires_at: "expires_at".into(),
            item_name: "item_name".into(),
            category: "category".into(),
            quantity: "quantity".into(),
            total_price: "total_price".into(),
            tool_uses: Some("tool_uses".into()),
            tool_capacity: Some("tool_capacity".into()),
            outcome: "outcome".into(),
        }
    }
}

fn header_index(headers: &csv::StringRecord) -> BTreeMap<String, usize> {
    let mut map = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        map.entry(h.trim().trim_start_matches('\u{feff}').to_string())
            .or_insert(i);
    }
    map
}

fn required(index: &BTreeMap<String, usize>, field: &str, column: &str) -> Result<usize> {
    index.get(column).copied().ok_or_else(|| Error::MissingColumn {
        field: field.to_string(),
        column: column.to_string(),
    })
}

fn optional(index: &BTreeMap<String, usize>, column: &Option<String>) -> Option<usize> {
    column.as_ref().and_then(|c| index.get(c).copied())
}

struct AuctionColumns {
    record_id: Option<usize>,
    player_id: usize,
    created_at: usize,
    expires_at: usize,
    item_name: usize,
    category: usize,
    quantity: usize,
    total_price: usize,
    tool_uses: Option<usize>,
    tool_capacity: Option<usize>,
    outcome: usize,
}

impl AuctionColumns {
    fn resolve(headers: &csv::StringRecord, schema: &SchemaMap) -> Result<Self> {
        let idx = header_index(headers);
        Ok(AuctionColumns {
            record_id: optional(&idx, &schema.record_id),
            player_id: required(&idx, "player_id", &schema.player_id)?,
            created_at: required(&idx, "created_at", &schema.created_at)?,
            expires_at: required(&idx, "expires_at", &schema.expires_at)?,
            item_name: required(&idx, "item_name", &schema.item_name)?,
            category: required(&idx, "category", &schema.category)?,
            quantity: required(&idx, "quantity", &schema.quantity)?,
            total_price: required(&idx, "total_price", &schema.total_price)?,
            tool_uses: optional(&idx, &schema.tool_uses),
            tool_capacity: optional(&idx, &schema.tool_capacity),
            outcome: required(&idx, "outcome", &schema.outcome)?,
        })
    }
}

fn field(row: &csv::StringRecord, i: usize) -> std::result::Result<&str, IssueKind> {
    match row.get(i).map(str::trim) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(IssueKind::MissingField),
    }
}

fn opt_field(row: &csv::StringRecord, i: Option<usize>) -> Option<&str> {
    i.and_then(|i| row.get(i))
        .map(str::trim)
        .filter(|v| !v.is_empty())
}

fn parse_price(raw: &str) -> std::result::Result<u64, IssueKind> {
    if let Ok(v) = raw.parse::<u64>() {
        return Ok(v);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v < 0.0 => Err(IssueKind::NegativePrice),
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(IssueKind::BadNumber),
    }
}

fn parse_count(raw: &str) -> std::result::Result<u32, IssueKind> {
    raw.parse::<u32>().map_err(|_| IssueKind::BadNumber)
}

fn parse_auction_row(
    row: &csv::StringRecord,
    cols: &AuctionColumns,
    ordinal: usize,
) -> std::result::Result<AuctionRecord, IssueKind> {
    let player_id = field(row, cols.player_id)?;
    let created_raw = field(row, cols.created_at)?;
    let expires_raw = field(row, cols.expires_at)?;
    let item_name = field(row, cols.item_name)?;
    let category = field(row, cols.category)?;
    let quantity_raw = field(row, cols.quantity)?;
    let price_raw = field(row, cols.total_price)?;
    let outcome_raw = field(row, cols.outcome)?;

    let created_at = parse_timestamp(created_raw).ok_or(IssueKind::BadTimestamp)?;
    let expires_at = parse_timestamp(expires_raw).ok_or(IssueKind::BadTimestamp)?;
    let quantity = parse_count(quantity_raw)?;
    let total_price = parse_price(price_raw)?;
    let outcome = outcome_raw
        .parse::<Outcome>()
        .map_err(|_| IssueKind::BadOutcome)?;
    let tool_uses = opt_field(row, cols.tool_uses).map(parse_count).transpose()?;
    let tool_capacity = opt_field(row, cols.tool_capacity).map(parse_count).transpose()?;

    if quantity == 0 {
        return Err(IssueKind::ZeroQuantity);
    }
    if expires_at < created_at {
        return Err(IssueKind::ExpiresBeforeCreated);
    }

    let record_id = opt_field(row, cols.record_id)
        .map(str::to_string)
        .unwrap_or_else(|| ordinal.to_string());

    Ok(AuctionRecord {
        record_id,
        player_id: player_id.to_string(),
        created_at,
        expires_at,
        item_name: item_name.to_string(),
        category: category.to_string(),
        quantity,
        total_price,
        tool_uses,
        tool_capacity,
        outcome,
    })
}

fn reader<R: Read>(input: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

fn read_error(e: csv::Error) -> Error {
    if !e.is_io_error() {
        return Error::Csv(e);
    }
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<input stream>", io),
        _ => unreachable!("checked is_io_error"),
    }
}

/// Parses an auction table. Records keep input order; a record without an
/// id column gets its zero-based data-row ordinal as id.
pub fn parse_auctions<R: Read>(
    input: R,
    schema: &SchemaMap,
    delimiter: u8,
) -> Result<(Vec<AuctionRecord>, IssueReport)> {
    let mut rdr = reader(input, delimiter);
    let headers = rdr.headers().map_err(read_error)?.clone();
    let cols = AuctionColumns::resolve(&headers, schema)?;

    let mut records = Vec::new();
    let mut issues = IssueReport::default();
    let mut row = csv::StringRecord::new();
    let mut ordinal = 0usize;
    loop {
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => match parse_auction_row(&row, &cols, ordinal) {
                Ok(rec) => records.push(rec),
                Err(kind) => issues.record(kind),
            },
            Err(e) if e.is_io_error() => return Err(read_error(e)),
            Err(_) => issues.record(IssueKind::MalformedRow),
        }
        ordinal += 1;
    }
    Ok((records, issues))
}

/// Writes records in the canonical column layout accepted by
/// [`parse_auctions`] with the default [`SchemaMap`].
pub fn write_auctions<W: Write>(out: W, records: &[AuctionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "record_id",
        "player_id",
        "created_at",
        "expires_at",
        "item_name",
        "category",
        "quantity",
        "total_price",
        "tool_uses",
        "tool_capacity",
        "outcome",
    ])?;
    for r in records {
        w.write_record([
            r.record_id.as_str(),
            r.player_id.as_str(),
            &r.created_at.to_string(),
            &r.expires_at.to_string(),
            r.item_name.as_str(),
            r.category.as_str(),
            &r.quantity.to_string(),
            &r.total_price.to_string(),
            &r.tool_uses.map(|v| v.to_string()).unwrap_or_default(),
            &r.tool_capacity.map(|v| v.to_string()).unwrap_or_default(),
            r.outcome.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<output stream>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForumPost {
    pub player_id: String,
    pub posted_at: Timestamp,
    pub comment_index: String,
    pub is_marketplace: bool,
}

/// Decides which forum posts count as marketplace posts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum MarketplaceFilter {
    /// Every post is a marketplace post (the input was pre-filtered).
    #[default]
    All,
    /// A boolean column in the table carries the flag.
    FlagColumn(String),
    /// Comment indices belonging to marketplace threads.
    Allowlist(BTreeSet<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForumOptions {
    pub player_id: String,
    pub posted_at: String,
    pub comment_index: String,
    pub filter: MarketplaceFilter,
    /// Posts outside this window are kept but counted as issues.
    pub study_window: Option<TimeWindow>,
}

impl Default for ForumOptions {
    fn default() -> Self {
        ForumOptions {
            player_id: "player_id".into(),
            posted_at: "posted_at".into(),
            comment_index: "comment_index".into(),
            filter: MarketplaceFilter::All,
            study_window: None,
        }
    }
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" | "y" => Some(true),
        "0" | "false" | "f" | "no" | "n" | "" => Some(false),
        _ => None,
    }
}

pub fn parse_forum<R: Read>(
    input: R,
    options: &ForumOptions,
    delimiter: u8,
) -> Result<(Vec<ForumPost>, IssueReport)> {
    let mut rdr = reader(input, delimiter);
    let headers = rdr.headers().map_err(read_error)?.clone();
    let idx = header_index(&headers);
    let player_col = required(&idx, "player_id", &options.player_id)?;
    let time_col = required(&idx, "posted_at", &options.posted_at)?;
    let comment_col = required(&idx, "comment_index", &options.comment_index)?;
    let flag_col = match &options.filter {
        MarketplaceFilter::FlagColumn(c) => Some(required(&idx, "is_marketplace", c)?),
        _ => None,
    };

    let mut posts = Vec::new();
    let mut issues = IssueReport::default();
    let mut row = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.is_io_error() => return Err(read_error(e)),
            Err(_) => {
                issues.record(IssueKind::MalformedRow);
                continue;
            }
        }
        let parsed = (|| {
            let player_id = field(&row, player_col)?;
            let posted_at = parse_timestamp(field(&row, time_col)?).ok_or(IssueKind::BadTimestamp)?;
            let comment_index = field(&row, comment_col)?;
            let is_marketplace = match &options.filter {
                MarketplaceFilter::All => true,
                MarketplaceFilter::FlagColumn(_) => {
                    let raw = flag_col.and_then(|i| row.get(i)).unwrap_or("");
                    parse_flag(raw).ok_or(IssueKind::BadNumber)?
                }
                MarketplaceFilter::Allowlist(ids) => ids.contains(comment_index),
            };
            Ok(ForumPost {
                player_id: player_id.to_string(),
                posted_at,
                comment_index: comment_index.to_string(),
                is_marketplace,
            })
        })();
        match parsed {
            Ok(post) => {
                if let Some(w) = &options.study_window {
                    if !w.contains(post.posted_at) {
                        issues.record(IssueKind::OutsideStudyWindow);
                    }
                }
                posts.push(post);
            }
            Err(kind) => issues.record(kind),
        }
    }
    Ok((posts, issues))
}

/// Canonical forum layout; re-parse with `MarketplaceFilter::FlagColumn("is_marketplace")`.
pub fn write_forum<W: Write>(out: W, posts: &[ForumPost]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["player_id", "posted_at", "comment_index", "is_marketplace"])?;
    for p in posts {
        w.write_record([
            p.player_id.as_str(),
            &p.posted_at.to_string(),
            p.comment_index.as_str(),
            if p.is_marketplace { "true" } else { "false" },
        ])?;
    }
    w.flush().map_err(|e| Error::io("<output stream>", e))?;
    Ok(())
}

/// Operator-set reference prices, currants per unit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreetPriceTable {
    pub snapshot_date: Option<NaiveDate>,
    pub entries: BTreeMap<String, f64>,
}

impl StreetPriceTable {
    pub fn get(&self, item: &str) -> Option<f64> {
        self.entries.get(item).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses an `item_name,price` table. Duplicate items keep the last price.
pub fn parse_street_prices<R: Read>(
    input: R,
    snapshot_date: Option<NaiveDate>,
    delimiter: u8,
) -> Result<(StreetPriceTable, IssueReport)> {
    let mut rdr = reader(input, delimiter);
    let headers = rdr.headers().map_err(read_error)?.clone();
    let idx = header_index(&headers);
    let item_col = required(&idx, "item_name", "item_name")?;
    let price_col = required(&idx, "price", "price")?;

    let mut table = StreetPriceTable {
        snapshot_date,
        entries: BTreeMap::new(),
    };
    let mut issues = IssueReport::default();
    let mut row = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.is_io_error() => return Err(read_error(e)),
            Err(_) => {
                issues.record(IssueKind::MalformedRow);
                continue;
            }
        }
        let parsed = (|| {
            let item = field(&row, item_col)?;
            let price: f64 = field(&row, price_col)?
                .parse()
                .map_err(|_| IssueKind::BadNumber)?;
            if !price.is_finite() {
                return Err(IssueKind::BadNumber);
            }
            if price <= 0.0 {
                return Err(IssueKind::NonpositivePrice);
            }
            Ok((item.to_string(), price))
        })();
        match parsed {
            Ok((item, price)) => {
                if table.entries.insert(item, price).is_some() {
                    issues.record(IssueKind::DuplicateItem);
                }
            }
            Err(kind) => issues.record(kind),
        }
    }
    Ok((table, issues))
}

pub fn write_street_prices<W: Write>(out: W, table: &StreetPriceTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["item_name", "price"])?;
    for (item, price) in &table.entries {
        w.write_record([item.as_str(), &price.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<output stream>", e))?;
    Ok(())
}

/// Auction records partitioned into contiguous calendar bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDataset {
    pub granularity: Granularity,
    pub bins: Vec<CalendarBin>,
    pub records_by_bin: Vec<Vec<AuctionRecord>>,
    pub players_by_bin: Vec<BTreeSet<String>>,
}

impl BinnedDataset {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn total_records(&self) -> usize {
        self.records_by_bin.iter().map(Vec::len).sum()
    }

    pub fn records(&self) -> impl Iterator<Item = &AuctionRecord> {
        self.records_by_bin.iter().flatten()
    }

    /// Index of the bin containing `ts`, if any.
    pub fn bin_of(&self, ts: Timestamp) -> Option<usize> {
        bin_index(&self.bins, ts)
    }

    pub fn bin_labels(&self) -> Vec<String> {
        self.bins.iter().map(|b| b.label.clone()).collect()
    }
}

fn bin_index(bins: &[CalendarBin], ts: Timestamp) -> Option<usize> {
    let i = bins.partition_point(|b| b.start <= ts);
    (i > 0 && bins[i - 1].contains(ts)).then(|| i - 1)
}

/// Partitions records by `created_at` into bins spanning the data range.
/// Within a bin, records keep their input order.
pub fn bin_records(records: Vec<AuctionRecord>, granularity: Granularity) -> Result<BinnedDataset> {
    let first = records.iter().map(|r| r.created_at).min();
    let last = records.iter().map(|r| r.created_at).max();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::EmptyInput("no auction records to bin"));
    };
    let bins = bins_covering(first, last, granularity);
    let mut records_by_bin: Vec<Vec<AuctionRecord>> = vec![Vec::new(); bins.len()];
    let mut players_by_bin: Vec<BTreeSet<String>> = vec![BTreeSet::new(); bins.len()];
    for rec in records {
        let i = bin_index(&bins, rec.created_at).expect("bins cover the record span");
        if !players_by_bin[i].contains(&rec.player_id) {
            players_by_bin[i].insert(rec.player_id.clone());
        }
        records_by_bin[i].push(rec);
    }
    Ok(BinnedDataset {
        granularity,
        bins,
        records_by_bin,
        players_by_bin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
record_id,player_id,created_at,expires_at,item_name,category,quantity,total_price,tool_uses,tool_capacity,outcome
a1,P1,2012-01-01T10:00:00Z,2012-01-04T10:00:00Z,meat,food,10,50,,,SOLD
a2,P2,1325412000,1325671200,hoe,tool,1,300,3,100,expired
a3,P1,2012-01-02T11:00:00Z,2012-01-05T11:00:00Z,meat,food,5,20,,,
a4,P3,2012-01-03T12:00:00Z,2012-01-06T12:00:00Z,milk,drink,2,8,,,Deleted
a5,P3,2012-01-03T13:00:00Z,2012-01-06T13:00:00Z,hooch,drink,1,9,,,sold
";

    #[test]
    fn fixture_with_missing_outcome() {
        let (recs, issues) = parse_auctions(FIXTURE.as_bytes(), &SchemaMap::default(), b',').unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(issues.count(IssueKind::MissingField), 1);
        assert_eq!(issues.total(), 1);

        let a1 = &recs[0];
        assert_eq!(a1.record_id, "a1");
        assert_eq!(a1.player_id, "P1");
        assert_eq!(a1.created_at, 1_325_412_000);
        assert_eq!(a1.expires_at, 1_325_671_200);
        assert_eq!(a1.item_name, "meat");
        assert_eq!(a1.category, "food");
        assert_eq!(a1.quantity, 10);
        assert_eq!(a1.total_price, 50);
        assert_eq!(a1.tool_uses, None);
        assert_eq!(a1.outcome, Outcome::Sold);
        assert_eq!(a1.unit_price(), 5.0);

        let a2 = &recs[1];
        assert_eq!(a2.created_at, 1_325_412_000);
        assert_eq!(a2.tool_uses, Some(3));
        assert_eq!(a2.tool_capacity, Some(100));
        assert_eq!(a2.outcome, Outcome::Expired);

        assert_eq!(recs[2].record_id, "a4");
        assert_eq!(recs[2].outcome, Outcome::Deleted);
        assert_eq!(recs[3].record_id, "a5");
    }

    #[test]
    fn header_only_is_empty() {
        let input = "player_id,created_at,expires_at,item_name,category,quantity,total_price,outcome\n";
        let (recs, issues) = parse_auctions(input.as_bytes(), &SchemaMap::default(), b',').unwrap();
        assert!(recs.is_empty());
        assert!(issues.is_empty());
    }

    #[test]
    fn missing_required_column_is_fatal() {
        let input = "player_id,created_at,expires_at,item_name,category,quantity,outcome\n";
        let err = parse_auctions(input.as_bytes(), &SchemaMap::default(), b',').unwrap_err();
        assert!(matches!(err, Error::MissingColumn { ref field, .. } if field == "total_price"));
        assert!(err.is_configuration());
    }

    #[test]
    fn synthesizes_ordinal_ids_and_honours_schema_map() {
        let input = "who;t0;t1;what;kind;n;price;result\n\
                     u1;100;200;meat;food;1;5;sold\n\
                     u2;100;50;meat;food;1;5;sold\n\
                     u3;100;200;meat;food;0;5;sold\n\
                     u4;100;200;meat;food;1;-5;sold\n\
                     u5;100;200;meat;food;1;5;won\n\
                     u6;100;300;meat;food;2;7;EXPIRED\n";
        let schema = SchemaMap {
            record_id: None,
            player_id: "who".into(),
            created_at: "t0".into(),
            expires_at: "t1".into(),
            item_name: "what".into(),
            category: "kind".into(),
            quantity: "n".into(),
            total_price: "price".into(),
            tool_uses: None,
            tool_capacity: None,
            outcome: "result".into(),
        };
        let (recs, issues) = parse_auctions(input.as_bytes(), &schema, b';').unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].record_id, "0");
        assert_eq!(recs[1].record_id, "5");
        assert_eq!(issues.count(IssueKind::ExpiresBeforeCreated), 1);
        assert_eq!(issues.count(IssueKind::ZeroQuantity), 1);
        assert_eq!(issues.count(IssueKind::NegativePrice), 1);
        assert_eq!(issues.count(IssueKind::BadOutcome), 1);
    }

    #[test]
    fn round_trip_is_field_identical() {
        let (recs, _) = parse_auctions(FIXTURE.as_bytes(), &SchemaMap::default(), b',').unwrap();
        let mut buf = Vec::new();
        write_auctions(&mut buf, &recs).unwrap();
        let (again, issues) = parse_auctions(buf.as_slice(), &SchemaMap::default(), b',').unwrap();
        assert!(issues.is_empty());
        assert_eq!(recs, again);
    }

    #[test]
    fn forum_flags_and_corrupt_rows() {
        let input = "player_id,posted_at,comment_index,is_marketplace\n\
                     P1,2012-01-01T00:00:00Z,c1,true\n\
                     P2,2012-01-02T00:00:00Z,c2,false\n\
                     P3,2012-01-03T00:00:00Z,c3,1\n";
        let opts = ForumOptions {
            filter: MarketplaceFilter::FlagColumn("is_marketplace".into()),
            ..ForumOptions::default()
        };
        let (posts, issues) = parse_forum(input.as_bytes(), &opts, b',').unwrap();
        assert_eq!(posts.len(), 3);
        assert_eq!(posts.iter().filter(|p| p.is_marketplace).count(), 2);
        assert!(issues.is_empty());

        let corrupt = "player_id,posted_at,comment_index\nP1,not-a-date,c1\nP2,1325376000,c2\n";
        let allow = ForumOptions {
            filter: MarketplaceFilter::Allowlist(["c2".to_string()].into()),
            ..ForumOptions::default()
        };
        let (posts, issues) = parse_forum(corrupt.as_bytes(), &allow, b',').unwrap();
        assert_eq!(posts.len(), 1);
        assert!(posts[0].is_marketplace);
        assert_eq!(issues.count(IssueKind::BadTimestamp), 1);

        let (posts, _) = parse_forum(
            "player_id,posted_at,comment_index\n".as_bytes(),
            &ForumOptions::default(),
            b',',
        )
        .unwrap();
        assert!(posts.is_empty());
    }

    #[test]
    fn forum_round_trip() {
        let posts = vec![
            ForumPost {
                player_id: "a".into(),
                posted_at: 5,
                comment_index: "9".into(),
                is_marketplace: true,
            },
            ForumPost {
                player_id: "b".into(),
                posted_at: 6,
                comment_index: "10".into(),
                is_marketplace: false,
            },
        ];
        let mut buf = Vec::new();
        write_forum(&mut buf, &posts).unwrap();
        let opts = ForumOptions {
            filter: MarketplaceFilter::FlagColumn("is_marketplace".into()),
            ..ForumOptions::default()
        };
        let (again, _) = parse_forum(buf.as_slice(), &opts, b',').unwrap();
        assert_eq!(posts, again);
    }

    #[test]
    fn street_prices() {
        let (t, issues) = parse_street_prices("item_name,price\nmeat,3\n".as_bytes(), None, b',').unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("meat"), Some(3.0));
        assert!(issues.is_empty());

        let dup = "item_name,price\nmeat,3\nmeat,4\nmilk,0\nhoe,abc\n";
        let (t, issues) = parse_street_prices(dup.as_bytes(), None, b',').unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("meat"), Some(4.0));
        assert_eq!(issues.count(IssueKind::DuplicateItem), 1);
        assert_eq!(issues.count(IssueKind::NonpositivePrice), 1);
        assert_eq!(issues.count(IssueKind::BadNumber), 1);
    }

    fn rec(player: &str, created_at: Timestamp) -> AuctionRecord {
        AuctionRecord {
            record_id: format!("{player}-{created_at}"),
            player_id: player.into(),
            created_at,
            expires_at: created_at + 3 * 86_400,
            item_name: "meat".into(),
            category: "food".into(),
            quantity: 1,
            total_price: 10,
            tool_uses: None,
            tool_capacity: None,
            outcome: Outcome::Sold,
        }
    }

    #[test]
    fn empty_binning_is_an_error() {
        assert!(matches!(
            bin_records(Vec::new(), Granularity::Month),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn single_day_is_one_month_bin() {
        let base = parse_timestamp("2012-03-05T00:00:00Z").unwrap();
        let recs = vec![rec("a", base), rec("b", base + 3600), rec("a", base + 7200)];
        let binned = bin_records(recs, Granularity::Month).unwrap();
        assert_eq!(binned.len(), 1);
        assert_eq!(binned.bins[0].label, "2012-03");
        assert_eq!(binned.players_by_bin[0].len(), 2);
    }

    #[test]
    fn month_boundary_membership() {
        let boundary = parse_timestamp("2012-02-01T00:00:00Z").unwrap();
        let recs = vec![rec("early", boundary - 1), rec("late", boundary)];
        let binned = bin_records(recs, Granularity::Month).unwrap();
        assert_eq!(binned.len(), 2);
        assert_eq!(binned.records_by_bin[0][0].player_id, "early");
        assert_eq!(binned.records_by_bin[1][0].player_id, "late");
        assert_eq!(binned.bins[1].start, boundary);
        assert_eq!(binned.bin_of(binned.bins[1].end - 1), Some(1));
        assert_eq!(binned.bin_of(binned.bins[0].start), Some(0));
    }
}
