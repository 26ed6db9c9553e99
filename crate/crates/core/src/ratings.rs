//! Questionnaire ratings, the three aggregation strategies, and the
//! track-grouped fold split used for cross-validation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::track::{read_track_file, serialize_track, write_track_file, Track, FILE_EXTENSION};

pub const MIN_STAR: u8 = 1;
pub const MAX_STAR: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Fun,
    Intensity,
    Nausea,
    Price,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Fun, Category::Intensity, Category::Nausea, Category::Price];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Fun => "fun",
            Category::Intensity => "intensity",
            Category::Nausea => "nausea",
            Category::Price => "price",
        }
    }
}

/// One star value per category, ordered fun, intensity, nausea, price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Stars(pub [u8; 4]);

impl Stars {
    pub fn get(&self, c: Category) -> u8 {
        self.0[c.index()]
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|s| (MIN_STAR..=MAX_STAR).contains(s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRecord {
    pub track_id: String,
    pub user_id: String,
    pub fun: u8,
    pub intensity: u8,
    pub nausea: u8,
    pub price: u8,
}

impl RatingRecord {
    pub fn new(track_id: impl Into<String>, user_id: impl Into<String>, stars: Stars) -> Self {
        let [fun, intensity, nausea, price] = stars.0;
        RatingRecord {
            track_id: track_id.into(),
            user_id: user_id.into(),
            fun,
            intensity,
            nausea,
            price,
        }
    }

    pub fn stars(&self) -> Stars {
        Stars([self.fun, self.intensity, self.nausea, self.price])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggregationMode {
    KeepAll,
    Average,
    MostPicked,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 3] = [
        AggregationMode::KeepAll,
        AggregationMode::Average,
        AggregationMode::MostPicked,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregationMode::KeepAll => "keep-all",
            AggregationMode::Average => "average",
            AggregationMode::MostPicked => "most-picked",
        }
    }
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AggregationMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown aggregation mode {s:?}")))
    }
}

impl std::fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Collapses the ratings of a single track into training targets.
///
/// `Average` rounds the per-category mean half-up. `MostPicked` takes the
/// modal star; among tied modes the one closest to the mean wins, and a
/// remaining tie goes to the lower star.
pub fn aggregate(records: &[RatingRecord], mode: AggregationMode) -> Result<Vec<Stars>> {
    let first = records.first().ok_or(Error::EmptyInput)?;
    for (i, r) in records.iter().enumerate() {
        if r.track_id != first.track_id {
            return Err(Error::invariant("ratings share one track_id", Some(i)));
        }
        if !r.stars().is_valid() {
            return Err(Error::invariant("stars in 1..=5", Some(i)));
        }
    }
    let n = records.len() as u32;
    let per_category = |pick: &dyn Fn(&[u32; 6], u32) -> u8| {
        let mut out = [0u8; 4];
        for c in Category::ALL {
            let mut counts = [0u32; 6];
            let mut sum = 0u32;
            for r in records {
                let s = r.stars().get(c);
                counts[s as usize] += 1;
                sum += u32::from(s);
            }
            out[c.index()] = pick(&counts, sum);
        }
        Stars(out)
    };
    Ok(match mode {
        AggregationMode::KeepAll => records.iter().map(RatingRecord::stars).collect(),
        // floor(sum/n + 1/2) in integer arithmetic
        AggregationMode::Average => vec![per_category(&|_, sum| ((2 * sum + n) / (2 * n)) as u8)],
        AggregationMode::MostPicked => vec![per_category(&|counts, sum| {
            let top = *counts.iter().max().unwrap();
            (MIN_STAR..=MAX_STAR)
                .filter(|&s| counts[s as usize] == top)
                // |s - mean| compared as |s*n - sum|
                .min_by_key(|&s| ((u32::from(s) * n).abs_diff(sum), s))
                .unwrap()
        })],
    })
}

/// A ride catalogue with the ratings collected for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    tracks: BTreeMap<String, Track>,
    ratings: Vec<RatingRecord>,
}

impl Dataset {
    pub fn new(tracks: Vec<Track>, ratings: Vec<RatingRecord>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for t in tracks {
            let id = t.id().to_string();
            if by_id.insert(id.clone(), t).is_some() {
                return Err(Error::invariant(format!("unique track id ({id})"), None));
            }
        }
        let mut rated = BTreeSet::new();
        for (i, r) in ratings.iter().enumerate() {
            if !by_id.contains_key(&r.track_id) {
                return Err(Error::invariant(
                    format!("rating resolves to a track ({})", r.track_id),
                    Some(i),
                ));
            }
            if !r.stars().is_valid() {
                return Err(Error::invariant("stars in 1..=5", Some(i)));
            }
            rated.insert(r.track_id.as_str());
        }
        if let Some(id) = by_id.keys().find(|id| !rated.contains(id.as_str())) {
            return Err(Error::invariant(format!("track {id} has at least one rating"), None));
        }
        Ok(Dataset { tracks: by_id, ratings })
    }

    pub fn tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.values()
    }

    pub fn track(&self, id: &str) -> Option<&Track> {
        self.tracks.get(id)
    }

    pub fn track_ids(&self) -> Vec<String> {
        self.tracks.keys().cloned().collect()
    }

    pub fn ratings(&self) -> &[RatingRecord] {
        &self.ratings
    }

    pub fn distinct_users(&self) -> usize {
        self.ratings
            .iter()
            .map(|r| r.user_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            tracks: self
                .tracks
                .keys()
                .map(|id| format!("tracks/{id}{FILE_EXTENSION}"))
                .collect(),
            ratings: self.ratings.clone(),
        }
    }

    /// SHA-256 over the canonical manifest and every track file, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.manifest().to_json());
        for t in self.tracks.values() {
            h.update(serialize_track(t));
        }
        hex(&h.finalize())
    }

    /// Writes `tracks/*.rcvr.json` and `manifest.json` under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let track_dir = dir.join("tracks");
        std::fs::create_dir_all(&track_dir).map_err(|e| Error::io(&track_dir, e))?;
        for (id, t) in &self.tracks {
            write_track_file(track_dir.join(format!("{id}{FILE_EXTENSION}")), t)?;
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, self.manifest().to_json()).map_err(|e| Error::io(&path, e))
    }

    /// Loads a manifest; track paths resolve relative to its directory.
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let bytes = std::fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest = Manifest::parse(&bytes)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let tracks = manifest
            .tracks
            .iter()
            .map(|rel| read_track_file(base.join(rel)))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(tracks, manifest.ratings)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// On-disk dataset index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tracks: Vec<String>,
    pub ratings: Vec<RatingRecord>,
}

impl Manifest {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::MalformedSyntax(e.to_string()))
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest encodes");
        out.push(b'\n');
        out
    }
}

pub fn ratings_csv(ratings: &[RatingRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in ratings {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// One training or evaluation target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledExample {
    pub track_id: String,
    /// Present only for [`AggregationMode::KeepAll`].
    pub user_id: Option<String>,
    pub target: Stars,
}

/// Joins tracks to targets, ordered by (track_id, user_id).
pub fn assemble_examples(ds: &Dataset, mode: AggregationMode) -> Result<Vec<AssembledExample>> {
    let mut by_track: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for r in &ds.ratings {
        by_track.entry(r.track_id.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (track_id, mut records) in by_track {
        records.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        match mode {
            AggregationMode::KeepAll => {
                out.extend(records.into_iter().map(|r| AssembledExample {
                    track_id: track_id.to_string(),
                    user_id: Some(r.user_id.clone()),
                    target: r.stars(),
                }));
            }
            _ => {
                let owned: Vec<RatingRecord> = records.into_iter().cloned().collect();
                let target = aggregate(&owned, mode)?[0];
                out.push(AssembledExample {
                    track_id: track_id.to_string(),
                    user_id: None,
                    target,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    /// Sorted.
    pub track_ids: Vec<String>,
    /// Indices into the example slice the fold was built from.
    pub example_indices: Vec<usize>,
}

/// Partitions the distinct track ids into `k` folds of near-equal size.
pub fn split_track_ids(track_ids: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    let mut ids: Vec<String> = track_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if k < 2 || ids.len() < k {
        return Err(Error::TooFewGroups {
            needed: k.max(2),
            got: ids.len(),
        });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(folds)
}

/// Splits examples into `k` folds so that every track lands in exactly one fold.
pub fn split_folds(examples: &[AssembledExample], k: usize, seed: u64) -> Result<Vec<Fold>> {
    let ids: Vec<String> = examples.iter().map(|e| e.track_id.clone()).collect();
    let groups = split_track_ids(&ids, k, seed)?;
    Ok(groups
        .into_iter()
        .map(|track_ids| {
            let members: BTreeSet<&str> = track_ids.iter().map(String::as_str).collect();
            let example_indices = examples
                .iter()
                .enumerate()
                .filter(|(_, e)| members.contains(e.track_id.as_str()))
                .map(|(i, _)| i)
                .collect();
            Fold {
                track_ids,
                example_indices,
            }
        })
        .collect())
}
