mod common;

use std::collections::BTreeSet;

use auctionflow::calendar::{Granularity, TimeWindow};
use auctionflow::clustering::{
    kmeans, lloyd, quintile_standardize, scatter_decomposition, select_k, FeatureMatrix, KMeansParams,
    KSelectOptions,
};
use auctionflow::flows::{flow_graph_from_assignments, retention_series};
use auctionflow::ingest::{
    bin_records, parse_auctions, write_auctions, AuctionRecord, Outcome, SchemaMap, StreetPriceTable,
};
use auctionflow::metrics::{
    cohort_matrix, compute_kpis, operator_fees, DayDenominator, FeeSchedule, COMMISSION_DROP,
};
use auctionflow::profiles::{label_clusters, LabelThresholds};
use auctionflow::stats::adjusted_skewness;
use auctionflow::valuation::{
    above_street_share, classify_trend, success_ratio, ItemPriceSeries, Sale, TrendClass, ValuationParams,
};
use proptest::prelude::*;

// 2011-11-01T00:00:00Z
const START: i64 = 1_320_105_600;
const DAY: i64 = 86_400;
const WEEK: i64 = 7 * DAY;

fn record() -> impl Strategy<Value = AuctionRecord> {
    (
        0u32..12,
        0i64..400 * DAY,
        0usize..3,
        "[a-z,\"]([a-z ,\"]{0,6}[a-z,\"])?",
        0u32..5,
        1u32..6,
        1u64..5000,
    )
        .prop_map(
            |(player, offset, outcome, item, cat, quantity, price)| AuctionRecord {
                record_id: String::new(),
                player_id: format!("p{player}"),
                created_at: START + offset,
                expires_at: START + offset + DAY,
                item_name: item,
                category: format!("c{cat}"),
                quantity,
                total_price: price,
                tool_uses: None,
                tool_capacity: None,
                outcome: [Outcome::Sold, Outcome::Expired, Outcome::Deleted][outcome],
            },
        )
}

fn records() -> impl Strategy<Value = Vec<AuctionRecord>> {
    prop::collection::vec(record(), 1..120).prop_map(|mut v| {
        for (i, r) in v.iter_mut().enumerate() {
            r.record_id = i.to_string();
        }
        v
    })
}

fn matrix(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=max_n, 1usize..=4)
        .prop_flat_map(|(n, p)| prop::collection::vec(prop::collection::vec(-50.0f64..50.0, p), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(recs in records()) {
        let mut buf = Vec::new();
        write_auctions(&mut buf, &recs).unwrap();
        let (back, issues) = parse_auctions(&buf[..], &SchemaMap::default(), b',').unwrap();
        prop_assert!(issues.is_empty());
        prop_assert_eq!(back, recs);
    }

    #[test]
    fn binning_partitions_records(recs in records(), g in prop_oneof![Just(Granularity::Day), Just(Granularity::Week), Just(Granularity::Month)]) {
        let n = recs.len();
        let binned = bin_records(recs, g).unwrap();
        prop_assert_eq!(binned.total_records(), n);
        for (bin, rs) in binned.bins.iter().zip(&binned.records_by_bin) {
            prop_assert!(rs.iter().all(|r| bin.start <= r.created_at && r.created_at < bin.end));
        }
        prop_assert!(binned.bins.windows(2).all(|w| w[0].end == w[1].start));
    }

    #[test]
    fn kpis_account_for_every_record(recs in records()) {
        let n = recs.len() as u64;
        let binned = bin_records(recs, Granularity::Month).unwrap();
        let kpis = compute_kpis(&binned, &[], DayDenominator::ActiveDays);
        prop_assert_eq!(kpis.iter().map(|k| k.total_auctions as u64).sum::<u64>(), n);
        for k in &kpis {
            prop_assert!(k.sold <= k.total_auctions);
            let back = k.avg_auctions_per_active_day * k.active_days as f64;
            prop_assert!((back - k.total_auctions as f64).abs() <= 1e-9 * k.total_auctions as f64);
        }
    }

    #[test]
    fn cohorts_never_grow_past_their_first_row(recs in records()) {
        let binned = bin_records(recs, Granularity::Month).unwrap();
        let m = cohort_matrix(&binned);
        for row in &m.cells {
            for (j, cell) in row.iter().enumerate() {
                if let (Some(c), Some(first)) = (cell, m.cells[0][j]) {
                    prop_assert!(*c <= first);
                }
            }
        }
    }

    #[test]
    fn commissions_only_on_early_sales(recs in records()) {
        let binned = bin_records(recs, Granularity::Month).unwrap();
        let ledger = operator_fees(&binned, &FeeSchedule::default());
        let by_id: std::collections::HashMap<&str, &AuctionRecord> = binned.records().map(|r| (r.record_id.as_str(), r)).collect();
        for e in &ledger.entries {
            let r = by_id[e.record_id.as_str()];
            if !r.is_sold() || r.created_at >= COMMISSION_DROP {
                prop_assert_eq!(e.commission, 0);
            }
        }
    }

    #[test]
    fn scatter_identity_and_sse(rows in matrix(30), k in 1usize..5, seed in any::<u64>()) {
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let k = k.min(m.n());
        let model = kmeans(&m, &KMeansParams { restarts: 5, ..KMeansParams::new(k, seed) }).unwrap();
        let s = scatter_decomposition(&m, &model.assignments, &model.centroids);
        let scale = s.total.max(1.0);
        prop_assert!((s.within + s.between - s.total).abs() <= 1e-9 * scale);
        prop_assert!((model.sse - model.trace_w).abs() <= 1e-9 * scale);
        let (w, b, t) = common::traces(&rows, &model.assignments, k);
        prop_assert!((w - model.trace_w).abs() <= 1e-9 * scale);
        prop_assert!((b - model.trace_b).abs() <= 1e-9 * scale);
        prop_assert!((t - model.trace_t).abs() <= 1e-9 * scale);
    }

    #[test]
    fn lloyd_never_increases_sse(rows in matrix(40), k in 1usize..6, pick in any::<u64>()) {
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let k = k.min(m.n());
        let init: Vec<Vec<f64>> = (0..k).map(|i| rows[(pick as usize + i * 7) % rows.len()].clone()).collect();
        let run = lloyd(&m, init, 100);
        for w in run.sse_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
        }
        prop_assert!(run.sse() <= run.sse_history[0] + 1e-9 * run.sse_history[0].max(1.0));
    }

    #[test]
    fn quintile_levels_are_one_to_five(rows in matrix(60)) {
        let p = rows[0].len();
        let boolean: Vec<bool> = (0..p).map(|j| j == p - 1 && p > 1).collect();
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|mut r| {
                if p > 1 {
                    r[p - 1] = f64::from(u8::from(r[p - 1] > 0.0));
                }
                r
            })
            .collect();
        let names = (0..p).map(|j| format!("f{j}")).collect();
        let s = quintile_standardize(&FeatureMatrix::new(names, boolean.clone(), &rows).unwrap()).unwrap();
        for j in 0..p {
            let col = s.column(j);
            if boolean[j] {
                prop_assert!(col.iter().all(|v| *v == 1.0 || *v == 5.0));
            } else {
                prop_assert!(col.iter().all(|v| (1.0..=5.0).contains(v) && v.fract() == 0.0));
                // Order preserving.
                for a in 0..rows.len() {
                    for b in 0..rows.len() {
                        if rows[a][j] <= rows[b][j] {
                            prop_assert!(col[a] <= col[b]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn flows_conserve_players(seed in any::<u64>(), bins in 1usize..6, players in 1usize..40) {
        let mut rng = common::rng(seed);
        let a = common::random_assignments(&mut rng, bins, players);
        let labels: Vec<String> = (0..bins).map(|b| format!("b{b}")).collect();
        let g = flow_graph_from_assignments(&a, &labels).unwrap();
        g.validate().unwrap();
        if let Err(e) = common::conservation_holds(&g, &a) {
            return Err(TestCaseError::fail(e));
        }
        let sets: Vec<BTreeSet<String>> = a.iter().map(|b| b.keys().cloned().collect()).collect();
        for r in retention_series(&sets) {
            let between: u64 = g
                .links
                .iter()
                .filter(|l| g.nodes.iter().any(|n| n.node_id == l.source && n.bin_index == r.bin_index))
                .map(|l| l.value)
                .sum();
            prop_assert_eq!(between, r.retained);
        }
    }

    #[test]
    fn label_shares_sum_to_one(seed in any::<u64>(), n in 3usize..60) {
        let mut rng = common::rng(seed);
        use rand::Rng;
        let kpis: Vec<_> = (0..n)
            .map(|i| {
                let total = rng.random_range(1..200u32);
                let days = rng.random_range(1..=total.min(30));
                let sold = rng.random_range(0..=total);
                auctionflow::PlayerBinKpi {
                    player_id: format!("p{i:03}"),
                    bin_index: 0,
                    total_auctions: total,
                    sold,
                    active_days: days,
                    avg_auctions_per_active_day: total as f64 / days as f64,
                    sale_rate: sold as f64 / total as f64,
                    distinct_categories: rng.random_range(1..10),
                    forum_flag: rng.random_bool(0.1),
                }
            })
            .collect();
        let m = quintile_standardize(&FeatureMatrix::from_kpis(&kpis)).unwrap();
        let model = kmeans(&m, &KMeansParams { restarts: 5, ..KMeansParams::new(3.min(n), seed) }).unwrap();
        let labeled = label_clusters(&model, &kpis, &LabelThresholds::default()).unwrap();
        let total: f64 = labeled.label_shares().values().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert_eq!(labeled.clusters.iter().map(|c| c.size).sum::<usize>(), n);
        prop_assert_eq!(label_clusters(&model, &kpis, &LabelThresholds::default()).unwrap(), labeled);
    }

    #[test]
    fn above_street_never_exceeds_success(prices in prop::collection::vec((1u64..3000, 1u32..5), 1..50), street in 1u32..1000, c in 1u64..50) {
        let sales: Vec<Sale> = prices.iter().enumerate().map(|(i, &(p, q))| Sale { at: i as i64, total_price: p, quantity: q }).collect();
        let s = ItemPriceSeries::new("x", sales.clone());
        let table = |v: f64| StreetPriceTable { snapshot_date: None, entries: [("x".to_string(), v)].into() };
        let all = TimeWindow::unbounded();
        let succ = success_ratio(&s, &table(street as f64), &all).unwrap();
        let above = above_street_share(&s, &table(street as f64), &all).unwrap();
        prop_assert!(above <= succ);

        let scaled = ItemPriceSeries::new("x", sales.iter().map(|x| Sale { total_price: x.total_price * c, ..*x }).collect());
        let st = table((street as u64 * c) as f64);
        prop_assert_eq!(success_ratio(&scaled, &st, &all).unwrap(), succ);
        prop_assert_eq!(above_street_share(&scaled, &st, &all).unwrap(), above);
    }

    #[test]
    fn trend_reverses_with_time(points in prop::collection::vec((0i64..10, 1u64..500), 2..40)) {
        let granules = 10;
        let window = TimeWindow::new(0, granules * WEEK);
        let fwd = ItemPriceSeries::new("x", points.iter().map(|&(g, p)| Sale { at: g * WEEK + 3600, total_price: p, quantity: 1 }).collect());
        let rev = ItemPriceSeries::new("x", points.iter().map(|&(g, p)| Sale { at: (granules - 1 - g) * WEEK + 3600, total_price: p, quantity: 1 }).collect());
        let params = ValuationParams::default();
        match (classify_trend(&fwd, &window, &params), classify_trend(&rev, &window, &params)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.relative_change + b.relative_change).abs() <= 1e-9);
                let swapped = match a.class {
                    TrendClass::Appreciated => TrendClass::Depreciated,
                    TrendClass::Depreciated => TrendClass::Appreciated,
                    TrendClass::Flat => TrendClass::Flat,
                };
                // Exact cutoff hits can round differently in each direction.
                if (a.relative_change.abs() - params.trend_cutoff).abs() > 1e-9 {
                    prop_assert_eq!(b.class, swapped);
                }
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            _ => prop_assert!(false, "only one direction produced a trend"),
        }
    }

    #[test]
    fn skewness_matches_oracle(xs in prop::collection::vec(-100.0f64..100.0, 3..60)) {
        if let Some(g) = adjusted_skewness(&xs) {
            let o = common::skewness_oracle(&xs);
            prop_assert!((g - o).abs() <= 1e-6 * o.abs().max(1.0), "{} vs {}", g, o);
        }
    }
}

fn canonical(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut r = rows.to_vec();
    r.sort_by(|a, b| a.partial_cmp(b).unwrap());
    r
}

#[test]
fn permutation_invariance_after_canonical_sort() {
    use rand::seq::SliceRandom;
    let mut rng = common::rng(17);
    for _ in 0..20 {
        let rows = common::random_rows(&mut rng, 25, 3);
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        let params = KMeansParams {
            restarts: 10,
            ..KMeansParams::new(3, 99)
        };
        let a = kmeans(&FeatureMatrix::from_rows(&canonical(&rows)).unwrap(), &params).unwrap();
        let b = kmeans(&FeatureMatrix::from_rows(&canonical(&shuffled)).unwrap(), &params).unwrap();
        assert_eq!(a.sse, b.sse);
        assert_eq!(a.assignments, b.assignments);
    }
}

#[test]
fn permutation_keeps_separated_partition() {
    use rand::seq::SliceRandom;
    let mut rng = common::rng(5);
    let mut rows = Vec::new();
    for c in [0.0, 100.0, 200.0] {
        for r in common::random_rows(&mut rng, 10, 2) {
            rows.push(r.iter().map(|v| v + c).collect::<Vec<_>>());
        }
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng);
    let permuted: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    let params = KMeansParams {
        restarts: 20,
        ..KMeansParams::new(3, 1)
    };
    let a = kmeans(&FeatureMatrix::from_rows(&rows).unwrap(), &params).unwrap();
    let b = kmeans(&FeatureMatrix::from_rows(&permuted).unwrap(), &params).unwrap();
    assert!((a.sse - b.sse).abs() <= 1e-9 * a.sse);
    // Same partition up to relabeling.
    for (pi, &i) in order.iter().enumerate() {
        for (pj, &j) in order.iter().enumerate() {
            assert_eq!(
                a.assignments[i] == a.assignments[j],
                b.assignments[pi] == b.assignments[pj]
            );
        }
    }
}

#[test]
fn select_k_is_reproducible() {
    use rand::Rng;
    let mut rng = common::rng(2024);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..5).map(|_| rng.random_range(1..=5) as f64).collect())
        .collect();
    let m = FeatureMatrix::from_rows(&rows).unwrap();
    let opts = KSelectOptions {
        restarts: 20,
        ..KSelectOptions::new(77)
    };
    let a = select_k(&m, &opts).unwrap();
    let b = select_k(&m, &opts).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.model, b.model);
    assert_eq!(
        serde_json::to_string(&a.model).unwrap(),
        serde_json::to_string(&b.model).unwrap()
    );
}

#[test]
fn skew_fixture_against_oracle() {
    let xs = [1.0, 1.0, 1.0, 1.0, 10.0];
    let g = adjusted_skewness(&xs).unwrap();
    assert!((g - common::skewness_oracle(&xs)).abs() < 1e-12);
    assert!((g - 2.236068).abs() < 1e-6);
}
