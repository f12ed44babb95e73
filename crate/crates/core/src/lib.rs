//! Behavioral analytics for MMO auction-house telemetry.
//!
//! The pipeline ingests auction listings, forum posts and street prices,
//! derives five behavioral KPIs per player per calendar bin, clusters each
//! bin with multi-start K-means, names the clusters with behavioral
//! profiles, and follows players between profiles over time as a Sankey
//! flow graph. Market valuation and descriptive statistics run alongside.

pub mod calendar;
pub mod clustering;
pub mod config;
pub mod error;
pub mod export;
pub mod flows;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod profiles;
pub mod stats;
pub mod synthetic;
pub mod valuation;

pub use calendar::{Granularity, TimeWindow, Timestamp};
pub use clustering::{ClusterModel, FeatureMatrix, KSelectionReport};
pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use export::SankeyDocument;
pub use flows::{FlowGraph, FlowLink, FlowNode};
pub use ingest::{
    AuctionRecord, BinnedDataset, ForumPost, IssueReport, Outcome, SchemaMap, StreetPriceTable,
};
pub use metrics::{ActivitySummary, CohortMatrix, FeeLedger, PlayerBinKpi};
pub use pipeline::{Pipeline, Stage};
pub use profiles::{Family, LabelThresholds, ProfileLabel};
pub use valuation::{ItemPriceSeries, ItemValuationReport, ValuationSignal};
