//! Sankey document emission and tabular reports.
//!
//! The Sankey document is written by hand so that key order, layout and
//! number formatting are fixed: counts are integers and fractions carry six
//! decimals. Parsing goes through serde, and parse then emit reproduces the
//! input bytes.
//!
//! Key order:
//!
//! ```text
//! meta:  bin_labels, total_players_per_bin, retention_per_bin
//! node:  id, month, cluster, value, color, joining, departing, description
//! link:  source, target, value
//! ```
//!
//! `retention_per_bin[t]` is the share of bin `t` players still active in bin
//! `t + 1`, so it has one entry fewer than `bin_labels`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{
    family_entry_exit, EntryExitRow, FlowGraph, InsularityRow, Lifetimes, RetentionPoint, TenureRow,
};
use crate::metrics::{ActivitySummary, CohortMatrix, Concentration, FeeLedger};
use crate::profiles::{ClusterSizeRow, ProfileLabel};
use crate::valuation::ValuationOutput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SankeyMeta {
    pub bin_labels: Vec<String>,
    pub total_players_per_bin: Vec<u64>,
    pub retention_per_bin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SankeyNode {
    pub id: String,
    pub month: usize,
    pub cluster: String,
    pub value: u64,
    pub color: String,
    pub joining: u64,
    pub departing: u64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SankeyLink {
    pub source: String,
    pub target: String,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SankeyDocument {
    pub meta: SankeyMeta,
    pub nodes: Vec<SankeyNode>,
    pub links: Vec<SankeyLink>,
}

impl SankeyDocument {
    /// Refuses graphs that fail [`FlowGraph::validate`].
    pub fn from_graph(graph: &FlowGraph, retention: &[RetentionPoint]) -> Result<Self> {
        graph.validate()?;
        let bins = graph.bins();
        if retention.len() != bins.saturating_sub(1) {
            return Err(Error::Invariant(format!(
                "{} retention points for {bins} bins",
                retention.len()
            )));
        }
        let mut nodes: Vec<&_> = graph.nodes.iter().collect();
        nodes.sort_by_key(|n| (n.bin_index, n.label.order()));
        Ok(SankeyDocument {
            meta: SankeyMeta {
                bin_labels: graph.bin_labels.clone(),
                total_players_per_bin: graph.active_per_bin.clone(),
                retention_per_bin: retention.iter().map(|r| r.rate).collect(),
            },
            nodes: nodes
                .into_iter()
                .map(|n| SankeyNode {
                    id: n.node_id.clone(),
                    month: n.bin_index,
                    cluster: n.label.display_name().to_string(),
                    value: n.size,
                    color: n.color.clone(),
                    joining: n.joining,
                    departing: n.departing,
                    description: n.description.clone(),
                })
                .collect(),
            links: graph
                .links
                .iter()
                .map(|l| SankeyLink {
                    source: l.source.clone(),
                    target: l.target.clone(),
                    value: l.value,
                })
                .collect(),
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: SankeyDocument = serde_json::from_str(text)?;
        doc.validate()?;
        Ok(doc)
    }

    /// Unique node ids and resolvable link endpoints.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return Err(Error::Invariant(format!("duplicate node id {}", n.id)));
            }
            if n.month >= self.meta.bin_labels.len() {
                return Err(Error::Invariant(format!("node {} outside bin range", n.id)));
            }
        }
        for l in &self.links {
            for end in [&l.source, &l.target] {
                if !ids.contains(end.as_str()) {
                    return Err(Error::Invariant(format!("link endpoint {end} has no node")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = String::new();
        let m = &self.meta;
        s.push_str("{\n  \"meta\": {\n");
        let labels: Vec<String> = m.bin_labels.iter().map(|l| json_str(l)).collect();
        let totals: Vec<String> = m.total_players_per_bin.iter().map(u64::to_string).collect();
        let rates: Vec<String> = m.retention_per_bin.iter().map(|&r| fraction(r)).collect();
        let _ = writeln!(s, "    \"bin_labels\": [{}],", labels.join(", "));
        let _ = writeln!(s, "    \"total_players_per_bin\": [{}],", totals.join(", "));
        let _ = writeln!(s, "    \"retention_per_bin\": [{}]", rates.join(", "));
        s.push_str("  },\n  \"nodes\": [");
        for (i, n) in self.nodes.iter().enumerate() {
            s.push_str(if i == 0 { "\n" } else { ",\n" });
            let _ = write!(
                s,
                "    {{\"id\": {}, \"month\": {}, \"cluster\": {}, \"value\": {}, \"color\": {}, \"joining\": {}, \"departing\": {}, \"description\": {}}}",
                json_str(&n.id),
                n.month,
                json_str(&n.cluster),
                n.value,
                json_str(&n.color),
                n.joining,
                n.departing,
                json_str(&n.description)
            );
        }
        s.push_str(if self.nodes.is_empty() { "],\n" } else { "\n  ],\n" });
        s.push_str("  \"links\": [");
        for (i, l) in self.links.iter().enumerate() {
            s.push_str(if i == 0 { "\n" } else { ",\n" });
            let _ = write!(
                s,
                "    {{\"source\": {}, \"target\": {}, \"value\": {}}}",
                json_str(&l.source),
                json_str(&l.target),
                l.value
            );
        }
        s.push_str(if self.links.is_empty() {
            "]\n}\n"
        } else {
            "\n  ]\n}\n"
        });
        s
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn fraction(x: f64) -> String {
    format!("{x:.6}")
}

/// Serialize a valid graph as Sankey JSON text.
pub fn emit_sankey(graph: &FlowGraph, retention: &[RetentionPoint]) -> Result<String> {
    Ok(SankeyDocument::from_graph(graph, retention)?.to_json())
}

/// Everything the report tables are built from.
#[derive(Debug, Clone, Copy)]
pub struct ReportInputs<'a> {
    pub activity: &'a ActivitySummary,
    pub concentration: &'a Concentration,
    pub cohorts: &'a [CohortMatrix],
    pub cluster_sizes: &'a [ClusterSizeRow],
    pub tenure: &'a [TenureRow],
    pub bin_labels: &'a [String],
    pub retention: &'a [RetentionPoint],
    pub insularity: &'a [InsularityRow],
    pub lifetimes: &'a Lifetimes,
    pub entry_exit: &'a [EntryExitRow],
    pub valuation: &'a ValuationOutput,
    pub fees: &'a FeeLedger,
}

pub const REPORT_FILES: [&str; 11] = [
    "activity_summary.csv",
    "concentration.csv",
    "cohort_matrix.csv",
    "cluster_sizes.csv",
    "distinct_clusters_by_tenure.csv",
    "retention.csv",
    "insularity.csv",
    "lifetimes.csv",
    "valuation_items.csv",
    "valuation_summary.csv",
    "fee_ledger.csv",
];

struct Table {
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            rows: vec![header.iter().map(|h| h.to_string()).collect()],
        }
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        self.rows.push(cells.into_iter().collect());
    }

    fn render(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().flexible(false).from_writer(Vec::new());
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner()
            .map_err(|e| Error::io("<report buffer>", e.into_error()))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fraction).unwrap_or_default()
}

fn stat(t: &mut Table, name: &str, value: String) {
    t.row([name.to_string(), value]);
}

fn activity_table(a: &ActivitySummary) -> Table {
    let mut t = Table::new(&["statistic", "value"]);
    stat(&mut t, "total_records", a.total_records.to_string());
    stat(&mut t, "players", a.per_player_counts.len().to_string());
    stat(&mut t, "mean_daily", fraction(a.mean_daily));
    stat(&mut t, "sd_daily", fraction(a.sd_daily));
    stat(&mut t, "max_daily_date", a.max_daily.key.to_string());
    stat(&mut t, "max_daily", a.max_daily.count.to_string());
    stat(&mut t, "min_daily_date", a.min_daily.key.to_string());
    stat(&mut t, "min_daily", a.min_daily.count.to_string());
    stat(&mut t, "mean_monthly", fraction(a.mean_monthly));
    stat(&mut t, "sd_monthly", fraction(a.sd_monthly));
    stat(&mut t, "max_monthly_month", a.max_monthly.key.clone());
    stat(&mut t, "max_monthly", a.max_monthly.count.to_string());
    stat(&mut t, "min_monthly_month", a.min_monthly.key.clone());
    stat(&mut t, "min_monthly", a.min_monthly.count.to_string());
    stat(&mut t, "per_player_mean", fraction(a.per_player_mean));
    stat(&mut t, "per_player_sd", fraction(a.per_player_sd));
    stat(&mut t, "per_player_min", a.per_player_min.to_string());
    stat(&mut t, "per_player_max", a.per_player_max.to_string());
    stat(&mut t, "overall_sale_rate", fraction(a.overall_sale_rate));
    stat(&mut t, "monthly_sale_rate_sd", fraction(a.monthly_sale_rate_sd));
    stat(
        &mut t,
        "per_player_month_sale_rate_mean",
        fraction(a.per_player_month_sale_rate_mean),
    );
    stat(
        &mut t,
        "per_player_month_sale_rate_sd",
        fraction(a.per_player_month_sale_rate_sd),
    );
    t
}

fn concentration_table(c: &Concentration) -> Table {
    let mut t = Table::new(&["kind", "name", "count", "share"]);
    for (kind, entries) in [("category", &c.categories), ("item", &c.items)] {
        for e in entries {
            t.row([
                kind.to_string(),
                e.name.clone(),
                e.count.to_string(),
                fraction(e.share),
            ]);
        }
    }
    t
}

fn cohort_table(cohorts: &[CohortMatrix]) -> Table {
    let mut t = Table::new(&["kind", "row", "row_total", "row_share", "join_bin", "count"]);
    for m in cohorts {
        let kind = serde_json::to_value(m.kind)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        for (r, cells) in m.cells.iter().enumerate() {
            for (j, cell) in cells.iter().enumerate() {
                let Some(count) = cell else { continue };
                t.row([
                    kind.clone(),
                    (r + 1).to_string(),
                    m.row_totals[r].to_string(),
                    fraction(m.row_shares[r]),
                    m.join_labels[j].clone(),
                    count.to_string(),
                ]);
            }
        }
    }
    t
}

fn cluster_size_table(rows: &[ClusterSizeRow]) -> Table {
    let mut t = Table::new(&["cluster", "mean_size", "sd", "months_manifested"]);
    for r in rows {
        t.row([
            r.label.display_name().to_string(),
            fraction(r.mean_share),
            fraction(r.sd_share),
            r.months_manifested.to_string(),
        ]);
    }
    t
}

fn tenure_table(rows: &[TenureRow]) -> Table {
    let mut t = Table::new(&["months_played", "players", "mean_distinct_clusters"]);
    for r in rows {
        t.row([
            r.tenure.to_string(),
            r.players.to_string(),
            fraction(r.mean_distinct_labels),
        ]);
    }
    t
}

fn retention_table(labels: &[String], points: &[RetentionPoint]) -> Table {
    let mut t = Table::new(&["bin", "next_bin", "active", "retained", "rate"]);
    for p in points {
        t.row([
            labels.get(p.bin_index).cloned().unwrap_or_default(),
            labels.get(p.bin_index + 1).cloned().unwrap_or_default(),
            p.active.to_string(),
            p.retained.to_string(),
            fraction(p.rate),
        ]);
    }
    t
}

fn insularity_table(rows: &[InsularityRow]) -> Table {
    let mut t = Table::new(&["level", "group", "insularity"]);
    for r in rows {
        t.row([r.level.clone(), r.group.clone(), opt(r.insularity)]);
    }
    t
}

fn lifetime_table(l: &Lifetimes, entry_exit: &[EntryExitRow]) -> Table {
    let mut t = Table::new(&[
        "level",
        "group",
        "players",
        "mean_months",
        "entry_share",
        "exit_share",
    ]);
    for r in &l.by_label {
        let ee = entry_exit
            .iter()
            .find(|e| r.group.parse::<ProfileLabel>().is_ok_and(|l| l == e.label));
        t.row([
            "label".to_string(),
            r.group.clone(),
            r.players.to_string(),
            fraction(r.mean_months),
            opt(ee.map(|e| e.entry_share)),
            opt(ee.map(|e| e.exit_share)),
        ]);
    }
    let fam = family_entry_exit(entry_exit);
    for r in &l.by_family {
        let ee = fam.iter().find(|(f, _)| f.as_str() == r.group).map(|(_, v)| *v);
        t.row([
            "family".to_string(),
            r.group.clone(),
            r.players.to_string(),
            fraction(r.mean_months),
            opt(ee.map(|v| v.0)),
            opt(ee.map(|v| v.1)),
        ]);
    }
    t
}

fn valuation_item_table(v: &ValuationOutput) -> Table {
    let mut t = Table::new(&[
        "item_name",
        "n_sales",
        "street_price",
        "success_ratio",
        "above_street_share",
        "skewness",
        "skew_class",
        "relative_change",
        "trend_class",
    ]);
    for r in &v.items {
        t.row([
            r.item_name.clone(),
            r.n_sales.to_string(),
            opt(r.street_price),
            opt(r.success_ratio),
            opt(r.above_street_share),
            opt(r.skewness),
            r.skew_class.map(|c| c.as_str().to_string()).unwrap_or_default(),
            opt(r.relative_change),
            r.trend_class.map(|c| c.as_str().to_string()).unwrap_or_default(),
        ]);
    }
    t
}

fn valuation_summary_table(v: &ValuationOutput) -> Table {
    let s = &v.summary;
    let mut t = Table::new(&["statistic", "value"]);
    stat(&mut t, "items", s.items.to_string());
    stat(
        &mut t,
        "items_sold_in_comparison",
        s.items_sold_in_comparison.to_string(),
    );
    stat(&mut t, "priced_items", s.priced_items.to_string());
    stat(
        &mut t,
        "majority_above_street_share",
        fraction(s.majority_above_street_share),
    );
    stat(
        &mut t,
        "majority_successful_share",
        fraction(s.majority_successful_share),
    );
    stat(&mut t, "skew_items", s.skew_items.to_string());
    stat(&mut t, "strong_right_share", fraction(s.strong_right_share));
    stat(&mut t, "mild_share", fraction(s.mild_share));
    for (name, tr) in [("full", &s.trend_full), ("final", &s.trend_final)] {
        stat(&mut t, &format!("trend_{name}_items"), tr.items.to_string());
        stat(
            &mut t,
            &format!("trend_{name}_appreciated"),
            fraction(tr.appreciated),
        );
        stat(
            &mut t,
            &format!("trend_{name}_depreciated"),
            fraction(tr.depreciated),
        );
        stat(&mut t, &format!("trend_{name}_flat"), fraction(tr.flat));
    }
    for (i, c) in s.success_histogram.iter().enumerate() {
        let lo = i as f64 * s.histogram_width;
        stat(&mut t, &format!("success_hist_{lo:.2}"), c.to_string());
    }
    t
}

fn fee_table(f: &FeeLedger) -> Table {
    let mut t = Table::new(&["bin", "currants"]);
    for b in &f.per_bin {
        t.row([b.bin.clone(), b.total().to_string()]);
    }
    t
}

/// Write the eleven report tables into `out_dir`, returning their paths in
/// [`REPORT_FILES`] order. All tables are rendered before anything is
/// written.
pub fn emit_reports(inputs: &ReportInputs<'_>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if inputs.activity.total_records == 0 {
        return Err(Error::EmptyInput("auction records"));
    }
    let tables = [
        activity_table(inputs.activity),
        concentration_table(inputs.concentration),
        cohort_table(inputs.cohorts),
        cluster_size_table(inputs.cluster_sizes),
        tenure_table(inputs.tenure),
        retention_table(inputs.bin_labels, inputs.retention),
        insularity_table(inputs.insularity),
        lifetime_table(inputs.lifetimes, inputs.entry_exit),
        valuation_item_table(inputs.valuation),
        valuation_summary_table(inputs.valuation),
        fee_table(inputs.fees),
    ];
    let rendered = tables.iter().map(Table::render).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut paths = Vec::with_capacity(REPORT_FILES.len());
    for (name, bytes) in REPORT_FILES.iter().zip(rendered) {
        let path = out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
