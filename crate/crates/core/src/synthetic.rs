//! Seeded synthetic auction data for tests, benches and demos.
//!
//! Players draw a behavior (casual, moderate, hardcore) that shapes how often
//! they list, how many categories they touch and how often they sell. Prices
//! scatter around a base price per item with occasional spikes.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calendar::Timestamp;
use crate::error::{Error, Result};
use crate::ingest::{
    write_auctions, write_forum, write_street_prices, AuctionRecord, ForumPost, Outcome, StreetPriceTable,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub players: usize,
    pub days: u32,
    pub items: usize,
    pub categories: usize,
    pub start: Timestamp,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            players: 200,
            days: 120,
            items: 40,
            categories: 8,
            // 2011-11-01T00:00:00Z
            start: 1_320_105_600,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub records: Vec<AuctionRecord>,
    pub posts: Vec<ForumPost>,
    pub street: StreetPriceTable,
}

struct Profile {
    per_day: f64,
    active_prob: f64,
    categories: usize,
    sale_prob: f64,
    posts: bool,
}

const DAY: i64 = 86_400;

pub fn generate(spec: &SyntheticSpec) -> SyntheticData {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let items: Vec<(String, usize, u64)> = (0..spec.items.max(1))
        .map(|i| {
            (
                format!("item_{i:03}"),
                i % spec.categories.max(1),
                rng.random_range(5..500),
            )
        })
        .collect();
    let street = StreetPriceTable {
        snapshot_date: None,
        entries: items
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 5 != 4)
            .map(|(_, (name, _, base))| (name.clone(), *base as f64))
            .collect(),
    };

    let mut records = Vec::new();
    let mut posts = Vec::new();
    for p in 0..spec.players {
        let player = format!("P{p:05}");
        let profile = match rng.random_range(0..10) {
            0..=4 => Profile {
                per_day: 1.0,
                active_prob: 0.15,
                categories: 2,
                sale_prob: if rng.random_bool(0.5) { 0.98 } else { 0.4 },
                posts: false,
            },
            5..=7 => Profile {
                per_day: 4.0,
                active_prob: 0.35,
                categories: 4,
                sale_prob: 0.8,
                posts: rng.random_bool(0.1),
            },
            _ => Profile {
                per_day: 12.0,
                active_prob: 0.7,
                categories: 7,
                sale_prob: 0.9,
                posts: rng.random_bool(0.3),
            },
        };
        let join = rng.random_range(0..spec.days);
        let tenure = rng.random_range(1..=spec.days - join);
        let cats: Vec<usize> = (0..profile.categories)
            .map(|_| rng.random_range(0..spec.categories.max(1)))
            .collect();
        for day in join..join + tenure {
            if !rng.random_bool(profile.active_prob) {
                continue;
            }
            let day_start = spec.start + day as i64 * DAY;
            let n = 1 + rng.random_range(0..(2.0 * profile.per_day) as u32);
            for _ in 0..n {
                let cat = cats[rng.random_range(0..cats.len())];
                let pool: Vec<&(String, usize, u64)> = items.iter().filter(|it| it.1 == cat).collect();
                let (item, _, base) = if pool.is_empty() {
                    &items[rng.random_range(0..items.len())]
                } else {
                    pool[rng.random_range(0..pool.len())]
                };
                // Slow drift down over the run, wide scatter, rare spikes.
                let drift = 1.0 - 0.3 * day as f64 / spec.days as f64;
                let mut unit = *base as f64 * drift * rng.random_range(0.5..1.3);
                if rng.random_bool(0.01) {
                    unit *= 50.0;
                }
                let quantity = rng.random_range(1..=5u32);
                let created_at = day_start + rng.random_range(0..DAY);
                let outcome = if rng.random_bool(profile.sale_prob) {
                    Outcome::Sold
                } else if rng.random_bool(0.8) {
                    Outcome::Expired
                } else {
                    Outcome::Deleted
                };
                records.push(AuctionRecord {
                    record_id: String::new(),
                    player_id: player.clone(),
                    created_at,
                    expires_at: created_at + 3 * DAY,
                    item_name: item.clone(),
                    category: format!("cat_{cat}"),
                    quantity,
                    total_price: (unit.max(1.0) * quantity as f64).round() as u64,
                    tool_uses: None,
                    tool_capacity: None,
                    outcome,
                });
            }
            if profile.posts && rng.random_bool(0.3) {
                posts.push(ForumPost {
                    player_id: player.clone(),
                    posted_at: day_start + rng.random_range(0..DAY),
                    comment_index: format!("c{}", posts.len()),
                    is_marketplace: true,
                });
            }
        }
    }
    records.sort_by(|a, b| (a.created_at, &a.player_id).cmp(&(b.created_at, &b.player_id)));
    for (i, r) in records.iter_mut().enumerate() {
        r.record_id = i.to_string();
    }
    posts.sort_by_key(|p| p.posted_at);
    SyntheticData {
        records,
        posts,
        street,
    }
}

/// Paths of the files written by [`write_inputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputFiles {
    pub auctions: PathBuf,
    pub forum: PathBuf,
    pub street_prices: PathBuf,
}

/// Write `auctions.csv`, `forum.csv` and `street_prices.csv` into `dir`.
pub fn write_inputs(data: &SyntheticData, dir: &Path) -> Result<InputFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = InputFiles {
        auctions: dir.join("auctions.csv"),
        forum: dir.join("forum.csv"),
        street_prices: dir.join("street_prices.csv"),
    };
    let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
    write_auctions(create(&files.auctions)?, &data.records)?;
    write_forum(create(&files.forum)?, &data.posts)?;
    write_street_prices(create(&files.street_prices)?, &data.street)?;
    Ok(files)
}
