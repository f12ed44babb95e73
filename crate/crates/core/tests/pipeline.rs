use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use auctionflow::config::PipelineConfig;
use auctionflow::export::{SankeyDocument, REPORT_FILES};
use auctionflow::pipeline::{self, Pipeline, Stage};
use auctionflow::synthetic::{generate, write_inputs, SyntheticSpec};
use auctionflow::Error;

fn config(dir: &Path, out: &str, seed: u64) -> PipelineConfig {
    let data = generate(&SyntheticSpec {
        players: 120,
        days: 95,
        seed: 9,
        ..Default::default()
    });
    let files = write_inputs(&data, &dir.join("in")).unwrap();
    PipelineConfig {
        auctions: Some(files.auctions),
        forum: Some(files.forum),
        street_prices: Some(files.street_prices),
        forum_flag_column: Some("is_marketplace".into()),
        output_dir: dir.join(out),
        seed: Some(seed),
        restarts: 10,
        ..PipelineConfig::default()
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
        out.insert(rel, fs::read(&entry).unwrap());
    }
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files
}

#[test]
fn full_run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "out", 42);
    Pipeline::new(&cfg).unwrap().run_all(|_, _| {}).unwrap();
    let out = &cfg.output_dir;
    for name in REPORT_FILES {
        let text = fs::read_to_string(out.join(pipeline::REPORTS_DIR).join(name)).unwrap();
        assert!(text.lines().count() >= 2, "{name} has no data rows");
    }
    let doc = SankeyDocument::parse(&fs::read_to_string(out.join(pipeline::SANKEY)).unwrap()).unwrap();
    assert_eq!(
        doc.meta.bin_labels,
        vec!["2011-11", "2011-12", "2012-01", "2012-02"]
    );
    assert_eq!(doc.meta.retention_per_bin.len(), 3);
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = config(tmp.path(), "a", 7);
    let b = PipelineConfig {
        output_dir: tmp.path().join("b"),
        ..a.clone()
    };
    Pipeline::new(&a).unwrap().run_all(|_, _| {}).unwrap();
    Pipeline::new(&b).unwrap().run_all(|_, _| {}).unwrap();
    let (sa, sb) = (snapshot(&a.output_dir), snapshot(&b.output_dir));
    assert_eq!(sa.len(), 10 + REPORT_FILES.len());
    assert_eq!(sa, sb);
}

#[test]
fn rerunning_a_stage_leaves_others_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "out", 3);
    let p = Pipeline::new(&cfg).unwrap();
    p.run_all(|_, _| {}).unwrap();
    let before = snapshot(&cfg.output_dir);
    p.run(Stage::Cluster).unwrap();
    p.run(Stage::Flows).unwrap();
    assert_eq!(before, snapshot(&cfg.output_dir));
}

#[test]
fn missing_upstream_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "out", 3);
    let err = Pipeline::new(&cfg).unwrap().run(Stage::Cluster).unwrap_err();
    assert!(err.is_configuration());
    match err {
        Error::MissingArtifact { path, stage } => {
            assert!(path.ends_with("kpis.csv"));
            assert_eq!(stage, "stats");
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn empty_auctions_fail_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), "out", 3);
    let empty = tmp.path().join("empty.csv");
    fs::write(
        &empty,
        "record_id,player_id,created_at,expires_at,item_name,category,quantity,total_price,outcome\n",
    )
    .unwrap();
    cfg.auctions = Some(empty);
    let err = Pipeline::new(&cfg).unwrap().run(Stage::Ingest).unwrap_err();
    assert!(matches!(err, Error::EmptyInput(_)));
    assert!(!cfg.output_dir.join(pipeline::RECORDS).exists());
}
