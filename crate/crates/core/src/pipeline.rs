//! Stage orchestration over an output directory.
//!
//! Each stage reads the artifacts of earlier stages from the output
//! directory and writes its own:
//!
//! | stage       | reads                                   | writes |
//! |-------------|-----------------------------------------|--------|
//! | `ingest`    | configured inputs                       | `records.csv`, `forum.csv`, `street_prices.csv` |
//! | `stats`     | `records.csv`, `forum.csv`              | `kpis.csv`, `stats.json` |
//! | `cluster`   | `kpis.csv`, `stats.json`                | `clusters.json` |
//! | `label`     | `kpis.csv`, `clusters.json`             | `labels.json` |
//! | `flows`     | `labels.json`                           | `flows.json` |
//! | `valuation` | `records.csv`, `street_prices.csv`      | `valuation.json` |
//! | `export`    | `stats.json`, `labels.json`, `flows.json`, `valuation.json` | `flows.sankey.json`, `reports/*.csv` |

use std::fmt;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calendar::TimeWindow;
use crate::clustering::{
    kmeans, quintile_standardize, select_k, ClusterModel, FeatureMatrix, KMeansParams, KSelectionReport,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::export::{emit_reports, ReportInputs, SankeyDocument};
use crate::flows::{
    assignments_from_labeled, distinct_clusters_by_tenure, entry_exit_distribution,
    flow_graph_from_assignments, insularity_table, lifetime_stats, retention_series, EntryExitRow, FlowGraph,
    InsularityRow, Lifetimes, RetentionPoint, TenureRow, Trajectories,
};
use crate::ingest::{
    bin_records, parse_auctions, parse_forum, parse_street_prices, write_auctions, write_forum,
    write_street_prices, AuctionRecord, ForumOptions, ForumPost, IssueKind, IssueReport, MarketplaceFilter,
    SchemaMap, StreetPriceTable,
};
use crate::metrics::{
    activity_summary, cohort_matrix, compute_kpis, concentration, operator_fees, participation, read_kpis,
    tenure_matrix, write_kpis, ActivitySummary, BinFees, CohortMatrix, Concentration, FeeLedger,
    Participation, PlayerBinKpi,
};
use crate::profiles::{cluster_size_table, label_clusters, ClusterSizeRow, LabeledClustering};
use crate::valuation::{price_series, valuate, ValuationOutput, ValuationWindows};

pub const RECORDS: &str = "records.csv";
pub const FORUM: &str = "forum.csv";
pub const STREET_PRICES: &str = "street_prices.csv";
pub const KPIS: &str = "kpis.csv";
pub const STATS: &str = "stats.json";
pub const CLUSTERS: &str = "clusters.json";
pub const LABELS: &str = "labels.json";
pub const FLOWS: &str = "flows.json";
pub const VALUATION: &str = "valuation.json";
pub const SANKEY: &str = "flows.sankey.json";
pub const REPORTS_DIR: &str = "reports";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Ingest,
    Stats,
    Cluster,
    Label,
    Flows,
    Valuation,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Stats,
        Stage::Cluster,
        Stage::Label,
        Stage::Flows,
        Stage::Valuation,
        Stage::Export,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Stats => "stats",
            Stage::Cluster => "cluster",
            Stage::Label => "label",
            Stage::Flows => "flows",
            Stage::Valuation => "valuation",
            Stage::Export => "export",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// What a stage did, for the diagnostic stream.
#[derive(Debug, Clone, Default)]
pub struct StageOutcome {
    pub issues: Vec<(String, IssueReport)>,
    pub notes: Vec<String>,
    pub written: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsArtifact {
    pub bin_labels: Vec<String>,
    pub activity: ActivitySummary,
    pub concentration: Concentration,
    pub participation: Participation,
    pub cohorts: Vec<CohortMatrix>,
    pub fees: Vec<BinFees>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinClustering {
    pub bin_index: usize,
    pub bin_label: String,
    pub players: usize,
    /// `None` for a bin without players.
    pub model: Option<ClusterModel>,
    /// `None` when the bin was too small or too uniform to select k.
    pub selection: Option<KSelectionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersArtifact {
    pub bin_labels: Vec<String>,
    pub bins: Vec<BinClustering>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsArtifact {
    pub bin_labels: Vec<String>,
    pub bins: Vec<LabeledClustering>,
    pub cluster_sizes: Vec<ClusterSizeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowsArtifact {
    pub graph: FlowGraph,
    pub retention: Vec<RetentionPoint>,
    pub insularity: Vec<InsularityRow>,
    pub lifetimes: Lifetimes,
    pub tenure: Vec<TenureRow>,
    pub entry_exit: Vec<EntryExitRow>,
}

pub struct Pipeline<'a> {
    config: &'a PipelineConfig,
    out: &'a Path,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8], outcome: &mut StageOutcome) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    outcome.written.push(path.to_path_buf());
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn producer(name: &str) -> &'static str {
    match name {
        RECORDS | FORUM | STREET_PRICES => "ingest",
        KPIS | STATS => "stats",
        CLUSTERS => "cluster",
        LABELS => "label",
        FLOWS => "flows",
        VALUATION => "valuation",
        _ => "export",
    }
}

impl<'a> Pipeline<'a> {
    /// Validates the config before anything runs.
    pub fn new(config: &'a PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            config,
            out: &config.output_dir,
        })
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn upstream(&self, name: &str) -> Result<PathBuf> {
        let path = self.artifact(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::MissingArtifact {
                path,
                stage: producer(name),
            })
        }
    }

    fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        let path = self.upstream(name)?;
        Ok(serde_json::from_reader(open(&path)?)?)
    }

    fn read_records(&self) -> Result<Vec<AuctionRecord>> {
        let path = self.upstream(RECORDS)?;
        let (records, issues) = parse_auctions(open(&path)?, &SchemaMap::default(), b',')?;
        if !issues.is_empty() {
            return Err(Error::Invariant(format!(
                "{} does not re-parse cleanly: {issues}",
                path.display()
            )));
        }
        Ok(records)
    }

    fn read_forum(&self) -> Result<Vec<ForumPost>> {
        let path = self.upstream(FORUM)?;
        let opts = ForumOptions {
            filter: MarketplaceFilter::FlagColumn("is_marketplace".into()),
            ..ForumOptions::default()
        };
        Ok(parse_forum(open(&path)?, &opts, b',')?.0)
    }

    fn read_kpis(&self) -> Result<Vec<PlayerBinKpi>> {
        read_kpis(open(&self.upstream(KPIS)?)?)
    }

    fn ensure_out(&self) -> Result<()> {
        fs::create_dir_all(self.out).map_err(|e| Error::io(self.out, e))
    }

    pub fn run(&self, stage: Stage) -> Result<StageOutcome> {
        self.ensure_out()?;
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Stats => self.stats(),
            Stage::Cluster => self.cluster(),
            Stage::Label => self.label(),
            Stage::Flows => self.flows(),
            Stage::Valuation => self.valuation(),
            Stage::Export => self.export(),
        }
    }

    /// Every stage in order, reporting each outcome through `progress`.
    pub fn run_all(&self, mut progress: impl FnMut(Stage, &StageOutcome)) -> Result<()> {
        for stage in Stage::ALL {
            let outcome = self.run(stage)?;
            progress(stage, &outcome);
        }
        Ok(())
    }

    fn ingest(&self) -> Result<StageOutcome> {
        let c = self.config;
        let delim = c.delimiter_byte()?;
        let mut outcome = StageOutcome::default();

        let path = c.auctions_path()?;
        let (mut records, mut issues) = parse_auctions(open(path)?, &c.schema(), delim)?;
        if let Some(w) = c.study_window()? {
            let before = records.len();
            records.retain(|r| w.contains(r.created_at));
            for _ in records.len()..before {
                issues.record(IssueKind::OutsideStudyWindow);
            }
        }
        if records.is_empty() {
            return Err(Error::EmptyInput("auction records"));
        }
        outcome.notes.push(format!("{} auction records", records.len()));
        outcome.issues.push((path.display().to_string(), issues));

        let posts = match &c.forum {
            Some(p) => {
                let (posts, issues) = parse_forum(open(p)?, &c.forum_options()?, delim)?;
                outcome.issues.push((p.display().to_string(), issues));
                posts
            }
            None => Vec::new(),
        };
        outcome.notes.push(format!("{} forum posts", posts.len()));

        let street = match &c.street_prices {
            Some(p) => {
                let snapshot = c
                    .street_price_date
                    .as_deref()
                    .map(|d| {
                        NaiveDate::parse_from_str(d, "%Y-%m-%d")
                            .map_err(|e| Error::Config(format!("street_price_date `{d}`: {e}")))
                    })
                    .transpose()?;
                let (table, issues) = parse_street_prices(open(p)?, snapshot, delim)?;
                outcome.issues.push((p.display().to_string(), issues));
                table
            }
            None => StreetPriceTable::default(),
        };
        outcome.notes.push(format!("{} street prices", street.len()));

        let records_csv = csv_bytes(|b| write_auctions(b, &records))?;
        let forum_csv = csv_bytes(|b| write_forum(b, &posts))?;
        let street_csv = csv_bytes(|b| write_street_prices(b, &street))?;
        write_file(&self.artifact(RECORDS), &records_csv, &mut outcome)?;
        write_file(&self.artifact(FORUM), &forum_csv, &mut outcome)?;
        write_file(&self.artifact(STREET_PRICES), &street_csv, &mut outcome)?;
        Ok(outcome)
    }

    fn stats(&self) -> Result<StageOutcome> {
        let c = self.config;
        let records = self.read_records()?;
        let posts = self.read_forum()?;
        let activity = activity_summary(&records, c.sd)?;
        let conc = concentration(&records)?;
        let binned = bin_records(records, c.granularity)?;
        let kpis = compute_kpis(&binned, &posts, c.day_denominator);
        let fees = operator_fees(&binned, &c.fee_schedule()?);
        let artifact = StatsArtifact {
            bin_labels: binned.bin_labels(),
            activity,
            concentration: conc,
            participation: participation(&kpis, c.sd),
            cohorts: vec![cohort_matrix(&binned), tenure_matrix(&binned)],
            fees: fees.per_bin,
        };
        let mut outcome = StageOutcome::default();
        outcome
            .notes
            .push(format!("{} bins, {} player-bin rows", binned.len(), kpis.len()));
        let kpi_csv = csv_bytes(|b| write_kpis(b, &kpis))?;
        write_file(&self.artifact(KPIS), &kpi_csv, &mut outcome)?;
        write_file(&self.artifact(STATS), &to_json(&artifact)?, &mut outcome)?;
        Ok(outcome)
    }

    fn cluster(&self) -> Result<StageOutcome> {
        let kpis = self.read_kpis()?;
        let stats: StatsArtifact = self.read_json(STATS)?;
        let opts = self.config.k_select()?;
        let mut outcome = StageOutcome::default();
        let mut bins = Vec::with_capacity(stats.bin_labels.len());
        for (b, label) in stats.bin_labels.iter().enumerate() {
            let rows = bin_slice(&kpis, b);
            let mut entry = BinClustering {
                bin_index: b,
                bin_label: label.clone(),
                players: rows.len(),
                model: None,
                selection: None,
            };
            if !rows.is_empty() {
                let m = quintile_standardize(&FeatureMatrix::from_kpis(rows))?;
                match select_k(&m, &opts) {
                    Ok(sel) => {
                        entry.model = Some(sel.model);
                        entry.selection = Some(sel.report);
                    }
                    Err(Error::NoConvergence { .. }) => {
                        outcome
                            .notes
                            .push(format!("bin {label}: no usable k, keeping a single cluster"));
                        entry.model = Some(kmeans(
                            &m,
                            &KMeansParams {
                                k: 1,
                                ..KMeansParams::new(1, opts.seed)
                            },
                        )?);
                    }
                    Err(e) => return Err(e),
                }
            }
            if let Some(m) = &entry.model {
                outcome
                    .notes
                    .push(format!("bin {label}: {} players, k = {}", rows.len(), m.k));
            }
            bins.push(entry);
        }
        let artifact = ClustersArtifact {
            bin_labels: stats.bin_labels,
            bins,
        };
        write_file(&self.artifact(CLUSTERS), &to_json(&artifact)?, &mut outcome)?;
        Ok(outcome)
    }

    fn label(&self) -> Result<StageOutcome> {
        let kpis = self.read_kpis()?;
        let clusters: ClustersArtifact = self.read_json(CLUSTERS)?;
        let mut bins = Vec::with_capacity(clusters.bins.len());
        for bc in &clusters.bins {
            let rows = bin_slice(&kpis, bc.bin_index);
            bins.push(match &bc.model {
                Some(model) => label_clusters(model, rows, &self.config.labels)?,
                None => LabeledClustering {
                    bin_index: bc.bin_index,
                    player_count: 0,
                    clusters: Vec::new(),
                    merged: Vec::new(),
                },
            });
        }
        let artifact = LabelsArtifact {
            cluster_sizes: cluster_size_table(&bins, self.config.sd)?,
            bin_labels: clusters.bin_labels,
            bins,
        };
        let mut outcome = StageOutcome::default();
        write_file(&self.artifact(LABELS), &to_json(&artifact)?, &mut outcome)?;
        Ok(outcome)
    }

    fn flows(&self) -> Result<StageOutcome> {
        let labels: LabelsArtifact = self.read_json(LABELS)?;
        let assignments = assignments_from_labeled(&labels.bins, labels.bin_labels.len())?;
        let graph = flow_graph_from_assignments(&assignments, &labels.bin_labels)?;
        let players: Vec<_> = assignments.iter().map(|b| b.keys().cloned().collect()).collect();
        let traj = Trajectories::from_assignments(&assignments);
        let artifact = FlowsArtifact {
            retention: retention_series(&players),
            insularity: insularity_table(&graph),
            lifetimes: lifetime_stats(&traj),
            tenure: distinct_clusters_by_tenure(&traj),
            entry_exit: entry_exit_distribution(&traj),
            graph,
        };
        let mut outcome = StageOutcome::default();
        outcome.notes.push(format!(
            "{} nodes, {} links",
            artifact.graph.nodes.len(),
            artifact.graph.links.len()
        ));
        write_file(&self.artifact(FLOWS), &to_json(&artifact)?, &mut outcome)?;
        Ok(outcome)
    }

    fn valuation(&self) -> Result<StageOutcome> {
        let c = self.config;
        let records = self.read_records()?;
        let path = self.upstream(STREET_PRICES)?;
        let (street, _) = parse_street_prices(open(&path)?, None, b',')?;
        let last = records
            .iter()
            .map(|r| r.created_at)
            .max()
            .ok_or(Error::EmptyInput("auction records"))?;
        let windows = ValuationWindows {
            comparison: c.comparison_window(last)?,
            trend: TimeWindow::unbounded(),
            final_stretch: c.final_window(last),
        };
        let series = price_series(&records);
        let out = valuate(&series, &street, &windows, &c.valuation);
        let mut outcome = StageOutcome::default();
        outcome.notes.push(format!(
            "{} items, {} with street prices",
            out.summary.items, out.summary.priced_items
        ));
        write_file(&self.artifact(VALUATION), &to_json(&out)?, &mut outcome)?;
        Ok(outcome)
    }

    fn export(&self) -> Result<StageOutcome> {
        let stats: StatsArtifact = self.read_json(STATS)?;
        let labels: LabelsArtifact = self.read_json(LABELS)?;
        let flows: FlowsArtifact = self.read_json(FLOWS)?;
        let valuation: ValuationOutput = self.read_json(VALUATION)?;
        let doc = SankeyDocument::from_graph(&flows.graph, &flows.retention)?;
        let fees = FeeLedger {
            entries: Vec::new(),
            per_bin: stats.fees.clone(),
        };
        let inputs = ReportInputs {
            activity: &stats.activity,
            concentration: &stats.concentration,
            cohorts: &stats.cohorts,
            cluster_sizes: &labels.cluster_sizes,
            tenure: &flows.tenure,
            bin_labels: &stats.bin_labels,
            retention: &flows.retention,
            insularity: &flows.insularity,
            lifetimes: &flows.lifetimes,
            entry_exit: &flows.entry_exit,
            valuation: &valuation,
            fees: &fees,
        };
        let mut outcome = StageOutcome {
            written: emit_reports(&inputs, &self.artifact(REPORTS_DIR))?,
            ..StageOutcome::default()
        };
        write_file(&self.artifact(SANKEY), doc.to_json().as_bytes(), &mut outcome)?;
        Ok(outcome)
    }
}

/// Rows of one bin from KPI rows sorted by bin.
fn bin_slice(kpis: &[PlayerBinKpi], bin: usize) -> &[PlayerBinKpi] {
    let lo = kpis.partition_point(|k| k.bin_index < bin);
    let hi = kpis.partition_point(|k| k.bin_index <= bin);
    &kpis[lo..hi]
}
