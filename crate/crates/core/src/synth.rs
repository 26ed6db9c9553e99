//! Procedural rides and simulated questionnaire answers.
//!
//! Tracks are chains of hill, drop, flat-turn, helix and loop segments joined
//! with matching position and heading, retimed under the energy model and
//! annotated. Ratings come from an affine oracle over the 25 ride parameters
//! plus per-user susceptibility and per-rating noise, both uniform.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_custom, slot, FeatureVector, SLOT_NAMES};
use crate::kinematics::{annotate, retime, Geometry, PhysicsConfig};
use crate::ratings::{Category, Dataset, RatingRecord, Stars};
use crate::track::{CoasterType, Track, Vec3};

pub const SAMPLE_DT: f64 = 0.1;
pub const MIN_SEGMENTS: usize = 6;
pub const MAX_SEGMENTS: usize = 20;
pub const GENTLE_MAX_PITCH_DEG: f64 = 25.0;
pub const EXTREME_MIN_DROP_M: f64 = 15.0;
const MAX_ATTEMPTS: usize = 10;
/// Spacing of the dense path before retiming, meters.
const PATH_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    Hill,
    Drop,
    FlatTurn,
    Helix,
    Loop,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 5] = [
        SegmentKind::Hill,
        SegmentKind::Drop,
        SegmentKind::FlatTurn,
        SegmentKind::Helix,
        SegmentKind::Loop,
    ];
}

/// Relative segment weights in [`SegmentKind::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Palette(pub [f64; 5]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_tracks: usize,
    pub n_users: usize,
    pub n_ratings: usize,
    pub gentle: Palette,
    pub normal: Palette,
    pub extreme: Palette,
    /// Half-width of the per-user susceptibility offset, stars.
    pub user_spread: f64,
    /// Half-width of the per-rating noise, stars.
    pub noise_spread: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            n_tracks: 33,
            n_users: 23,
            n_ratings: 100,
            gentle: Palette([3.0, 1.0, 4.0, 1.0, 0.0]),
            normal: Palette([3.0, 2.0, 3.0, 2.0, 1.0]),
            extreme: Palette([2.0, 3.0, 2.0, 2.0, 2.0]),
            user_spread: 0.5,
            noise_spread: 0.5,
        }
    }
}

impl GeneratorConfig {
    /// Default scale with every noise source switched off.
    pub fn noiseless() -> Self {
        GeneratorConfig {
            user_spread: 0.0,
            noise_spread: 0.0,
            ..Default::default()
        }
    }

    pub fn palette(&self, t: CoasterType) -> &Palette {
        match t {
            CoasterType::Gentle => &self.gentle,
            CoasterType::Normal => &self.normal,
            CoasterType::Extreme => &self.extreme,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let infeasible = |m: String| Err(Error::ConfigInfeasible(m));
        if self.n_tracks == 0 || self.n_users == 0 {
            return infeasible("need at least one track and one user".into());
        }
        if self.n_ratings < self.n_tracks {
            return infeasible(format!(
                "{} ratings cannot cover {} tracks",
                self.n_ratings, self.n_tracks
            ));
        }
        if self.n_ratings > self.n_tracks * self.n_users {
            return infeasible(format!(
                "{} ratings exceed one rating per (track, user) pair",
                self.n_ratings
            ));
        }
        for t in CoasterType::ALL {
            let w = &self.palette(t).0;
            if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || w.iter().sum::<f64>() <= 0.0 {
                return infeasible(format!(
                    "palette for {t:?} needs nonnegative weights with a positive sum"
                ));
            }
        }
        if !(self.user_spread >= 0.0 && self.noise_spread >= 0.0) {
            return infeasible("spreads must be ≥ 0".into());
        }
        Ok(())
    }
}

/// Segment dimensions for one ride.
struct Style {
    max_pitch_deg: f64,
    hill_height: (f64, f64),
    drop_depth: (f64, f64),
    loops: bool,
    top_speed: f64,
    /// Centripetal acceleration of vertical curves, m/s².
    vertical_accel: f64,
    /// Centripetal acceleration of turns, m/s².
    lateral_accel: f64,
}

/// Ride levels, mildest first. Each coaster type owns a contiguous run.
pub const LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

pub fn levels_for(t: CoasterType) -> &'static [f64] {
    match t {
        CoasterType::Gentle => &LEVELS[0..2],
        CoasterType::Normal => &LEVELS[2..3],
        CoasterType::Extreme => &LEVELS[3..5],
    }
}

/// Every dimension follows the ride level, from mild at 0 to wild at 1.
/// Curves are sized to reach the level's acceleration budget, so a ride's
/// peak forces are set by its level and its layout only moves the rest.
fn style(level: f64) -> Style {
    let lerp = |lo: f64, hi: f64| lo + (hi - lo) * level;
    let band = |x: f64| (0.85 * x, 1.15 * x);
    let g = crate::kinematics::STANDARD_GRAVITY;
    Style {
        max_pitch_deg: 15.0 + 50.0 * level * level,
        hill_height: band(lerp(1.5, 14.0)),
        drop_depth: band(lerp(3.0, 30.0)),
        loops: level >= 1.0,
        top_speed: lerp(12.0, 28.0),
        vertical_accel: lerp(1.2, 3.5) * g,
        lateral_accel: lerp(0.8, 4.5) * g,
    }
}

/// Builds the dense path while tracking heading and the coasting speed.
struct PathBuilder {
    points: Vec<Vec3>,
    yaw: f64,
    g0: f64,
    v0: f64,
    h0: f64,
}

impl PathBuilder {
    fn end(&self) -> Vec3 {
        *self.points.last().unwrap()
    }

    /// Design speed at the current end under frictionless coasting.
    fn speed(&self) -> f64 {
        (self.v0 * self.v0 + 2.0 * self.g0 * (self.h0 - self.end().y))
            .max(0.0)
            .sqrt()
    }

    /// Appends a segment given in local coordinates (x ahead, y up, z to the
    /// right), sampled at `u ∈ (0, 1]`, then turns the heading by `turn`.
    fn push(&mut self, length: f64, turn: f64, local: impl Fn(f64) -> Vec3) {
        let origin = self.end();
        let (s, c) = self.yaw.sin_cos();
        let ahead = Vec3::new(c, 0.0, s);
        let right = Vec3::new(-s, 0.0, c);
        let steps = ((length / PATH_STEP).ceil() as usize).max(2);
        for k in 1..=steps {
            let l = local(k as f64 / steps as f64);
            self.points.push(origin + ahead * l.x + Vec3::y() * l.y + right * l.z);
        }
        self.yaw += turn;
    }

    fn hill(&mut self, length: f64, height: f64) {
        self.push(length, 0.0, |u| {
            Vec3::new(length * u, height * 0.5 * (1.0 - (TAU * u).cos()), 0.0)
        });
    }

    /// Negative `depth` climbs.
    fn drop(&mut self, length: f64, depth: f64) {
        self.push(length, 0.0, |u| {
            Vec3::new(length * u, -depth * 0.5 * (1.0 - (PI * u).cos()), 0.0)
        });
    }

    /// Horizontal arc; positive `angle` turns right. `descent` is spread as a
    /// cosine ramp so the ends stay level.
    fn arc(&mut self, radius: f64, angle: f64, descent: f64) {
        let sweep = angle.abs();
        let side = angle.signum();
        let length = (radius * sweep).hypot(descent);
        self.push(length, angle, |u| {
            let a = sweep * u;
            Vec3::new(
                radius * a.sin(),
                -descent * 0.5 * (1.0 - (PI * u).cos()),
                side * radius * (1.0 - a.cos()),
            )
        });
    }

    /// Vertical loop with a sideways shift so the exit clears the entry.
    fn vertical_loop(&mut self, radius: f64, shift: f64) {
        self.push(TAU * radius * 1.05, 0.0, |u| {
            let a = TAU * u;
            Vec3::new(radius * a.sin(), radius * (1.0 - a.cos()), shift * (a - a.sin()) / TAU)
        });
    }
}

fn pick(rng: &mut impl Rng, weights: &[f64; 5]) -> SegmentKind {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random_range(0.0..total);
    for (kind, &w) in SegmentKind::ALL.iter().zip(weights) {
        if x < w {
            return *kind;
        }
        x -= w;
    }
    SegmentKind::FlatTurn
}

fn within(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Smallest turn radius, meters.
const MIN_RADIUS: f64 = 4.0;

/// Segment order: a drop first, then palette draws with at least two turns.
fn plan(rng: &mut ChaCha8Rng, palette: &Palette) -> Vec<SegmentKind> {
    let n = rng.random_range(MIN_SEGMENTS..=MAX_SEGMENTS);
    let mut kinds: Vec<SegmentKind> = std::iter::once(SegmentKind::Drop)
        .chain((1..n).map(|_| pick(rng, &palette.0)))
        .collect();
    let is_turn = |k: &SegmentKind| matches!(k, SegmentKind::FlatTurn | SegmentKind::Helix);
    while kinds.iter().filter(|k| is_turn(k)).count() < 2 {
        let i = rng.random_range(1..kinds.len());
        kinds[i] = SegmentKind::FlatTurn;
    }
    kinds
}

fn build_path(rng: &mut ChaCha8Rng, level: f64, palette: &Palette, physics: &PhysicsConfig) -> Vec<Vec3> {
    let st = style(level);
    let slope = st.max_pitch_deg.to_radians().tan();
    let mut b = PathBuilder {
        points: vec![Vec3::zeros()],
        yaw: rng.random_range(0.0..TAU),
        g0: physics.g0,
        v0: physics.v_launch,
        h0: 0.0,
    };
    let g0 = physics.g0;
    // peak slope of a cosine ramp is (π/2)·depth/length and its end
    // curvature is (π²/2)·depth/length²
    let drop_length = |depth: f64, v: f64| {
        let v_max_sq = (v * v + 2.0 * g0 * depth).max(v * v);
        (PI * 0.5 * depth.abs() / slope)
            .max(PI * (depth.abs() * v_max_sq / (2.0 * st.vertical_accel)).sqrt())
            .max(8.0)
    };
    // turns alternate so both lateral directions occur
    let mut side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };

    for (i, planned) in plan(rng, palette).into_iter().enumerate() {
        let v = b.speed();
        let energy_height = v * v / (2.0 * g0);
        let mut kind = planned;
        // circular loops need v² ≥ 5·g·R at the entry to stay on the rails
        let loop_r = v * v / (g0 * rng.random_range(5.5..6.5));
        if kind == SegmentKind::Loop && !(st.loops && (5.0..=16.0).contains(&loop_r)) {
            kind = SegmentKind::Drop;
        }
        if kind == SegmentKind::Hill && energy_height < 2.0 * st.hill_height.0 {
            kind = SegmentKind::Drop;
        }
        match kind {
            SegmentKind::Hill => {
                let h = within(rng, st.hill_height).min(0.6 * energy_height);
                // crest curvature is 2π²·h/length²
                let length = (PI * h / slope)
                    .max(PI * (2.0 * h * v * v / st.vertical_accel).sqrt())
                    .max(10.0);
                b.hill(length, h);
            }
            SegmentKind::Drop => {
                let mut depth = within(rng, st.drop_depth);
                if i > 0 && v > st.top_speed {
                    // too fast: climb instead, keeping some speed in hand
                    depth = -depth.min(0.6 * energy_height);
                }
                b.drop(drop_length(depth, v), depth);
            }
            SegmentKind::FlatTurn => {
                let angle = rng.random_range(0.5..1.0) * PI * side;
                side = -side;
                b.arc((v * v / st.lateral_accel).max(MIN_RADIUS), angle, 0.0);
            }
            SegmentKind::Helix => {
                let angle = rng.random_range(1.2..2.0) * PI * side;
                side = -side;
                let r0 = (v * v / st.lateral_accel).max(MIN_RADIUS);
                let descent = if v > st.top_speed {
                    0.0
                } else {
                    (0.4 * r0 * angle.abs() * slope).min(within(rng, st.drop_depth))
                };
                // sized for the exit speed, where the turn is tightest in g
                let r = ((v * v + 2.0 * g0 * descent) / st.lateral_accel).max(MIN_RADIUS);
                b.arc(r, angle, descent);
            }
            SegmentKind::Loop => b.vertical_loop(loop_r, 2.0 * loop_r),
        }
    }
    b.points
}

fn max_pitch_deg(track: &Track) -> f64 {
    let fv = extract_custom(track).expect("valid track");
    fv.0[slot::MAX_DOWN_ANGLE].max(fv.0[slot::MAX_UP_ANGLE])
}

fn deepest_descent(track: &Track) -> f64 {
    // largest height loss between any point and a later one
    let mut peak = f64::NEG_INFINITY;
    let mut best: f64 = 0.0;
    for p in track.points() {
        peak = peak.max(p.position.y);
        best = best.max(peak - p.position.y);
    }
    best
}

/// Generates one annotated ride, deterministic in `(seed, coaster_type)`.
pub fn generate_track(seed: u64, coaster_type: CoasterType) -> Result<Track> {
    generate_track_with(
        seed,
        coaster_type,
        &GeneratorConfig::default().palette(coaster_type).clone(),
    )
}

pub fn generate_track_with(seed: u64, coaster_type: CoasterType, palette: &Palette) -> Result<Track> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let choices = levels_for(coaster_type);
    let level = choices[rng.random_range(0..choices.len())];
    build_track(&mut rng, level, palette)
}

/// Coaster type owning `level`.
pub fn type_of_level(level: f64) -> CoasterType {
    CoasterType::ALL
        .into_iter()
        .find(|t| levels_for(*t).contains(&level))
        .expect("level from LEVELS")
}

/// Generates one ride at `LEVELS[level_index]`, deterministic in both arguments.
pub fn generate_track_at_level(seed: u64, level_index: usize, palette: &Palette) -> Result<Track> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_track(&mut rng, LEVELS[level_index], palette)
}

fn build_track(rng: &mut ChaCha8Rng, level: f64, palette: &Palette) -> Result<Track> {
    let physics = PhysicsConfig::default();
    let coaster_type = type_of_level(level);
    let mut reason = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let path = build_path(rng, level, palette, &physics);
        let attempt = retime(&path, SAMPLE_DT, &physics).and_then(|positions| {
            annotate(
                &Geometry {
                    id: "generated".into(),
                    coaster_type,
                    dt: SAMPLE_DT,
                    positions,
                },
                &physics,
            )
        });
        match attempt {
            Ok(track) => {
                if coaster_type == CoasterType::Gentle && max_pitch_deg(&track) > GENTLE_MAX_PITCH_DEG {
                    reason = format!("pitch {:.1}° over the gentle limit", max_pitch_deg(&track));
                } else if coaster_type == CoasterType::Extreme && deepest_descent(&track) < EXTREME_MIN_DROP_M {
                    reason = "no drop of at least 15 m".into();
                } else {
                    return Ok(track);
                }
            }
            Err(e) => reason = e.to_string(),
        }
    }
    Err(Error::GenerationFailed {
        attempts: MAX_ATTEMPTS,
        reason,
    })
}

/// Affine map from the 25 ride parameters to a latent star score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Affine {
    pub intercept: f64,
    /// Slot name → weight; absent slots weigh 0.
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCoefficients {
    pub fun: Affine,
    pub intensity: Affine,
    pub nausea: Affine,
    pub price: Affine,
}

/// Slots whose weight must be nonnegative in the nausea map.
pub const FORCE_MAGNITUDE_SLOTS: [&str; 12] = [
    "vertical_max_neg",
    "vertical_avg_neg",
    "vertical_frac_neg",
    "lateral_max_pos",
    "lateral_max_neg",
    "lateral_avg_pos",
    "lateral_avg_neg",
    "lateral_frac_pos",
    "lateral_frac_neg",
    "longitudinal_max_pos",
    "longitudinal_max_neg",
    "vertical_max_pos",
];

const DEFAULT_ORACLE: &str = include_str!("../data/oracle-coefficients.json");

impl Default for OracleCoefficients {
    fn default() -> Self {
        OracleCoefficients::parse(DEFAULT_ORACLE.as_bytes()).expect("shipped coefficients are valid")
    }
}

impl OracleCoefficients {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let c: OracleCoefficients = serde_json::from_slice(bytes).map_err(|e| Error::MalformedSyntax(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("coefficients encode");
        out.push(b'\n');
        out
    }

    pub fn get(&self, c: Category) -> &Affine {
        match c {
            Category::Fun => &self.fun,
            Category::Intensity => &self.intensity,
            Category::Nausea => &self.nausea,
            Category::Price => &self.price,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in Category::ALL {
            let a = self.get(c);
            if !a.intercept.is_finite() {
                return Err(Error::InvalidConfig(format!("{} intercept is not finite", c.name())));
            }
            for (name, w) in &a.weights {
                if !SLOT_NAMES.contains(&name.as_str()) {
                    return Err(Error::InvalidConfig(format!("unknown slot {name:?}")));
                }
                if !w.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "{} weight for {name} is not finite",
                        c.name()
                    )));
                }
            }
        }
        for (name, w) in &self.nausea.weights {
            if FORCE_MAGNITUDE_SLOTS.contains(&name.as_str()) && *w < 0.0 {
                return Err(Error::InvalidConfig(format!("nausea weight for {name} must be ≥ 0")));
            }
        }
        Ok(())
    }

    /// Unclamped affine scores, in category order.
    pub fn raw_scores(&self, fv: &FeatureVector) -> [f64; 4] {
        Category::ALL.map(|c| {
            let a = self.get(c);
            a.intercept
                + a.weights
                    .iter()
                    .map(|(name, w)| w * fv.get(name).expect("validated slot"))
                    .sum::<f64>()
        })
    }

    /// Latent scores clamped to `[1, 5]`.
    pub fn latents(&self, fv: &FeatureVector) -> [f64; 4] {
        self.raw_scores(fv).map(|s| s.clamp(1.0, 5.0))
    }
}

pub fn oracle_latents(track: &Track, oracle: &OracleCoefficients) -> Result<[f64; 4]> {
    Ok(oracle.latents(&extract_custom(track)?))
}

fn star(x: f64) -> u8 {
    x.round().clamp(1.0, 5.0) as u8
}

fn symmetric(rng: &mut impl Rng, spread: f64) -> f64 {
    if spread > 0.0 {
        rng.random_range(-spread..=spread)
    } else {
        0.0
    }
}

pub fn user_id(i: usize) -> String {
    format!("user-{i:02}")
}

/// Draws `cfg.n_ratings` ratings so that every track gets at least one and no
/// user rates a track twice.
pub fn simulate_ratings(tracks: Vec<Track>, cfg: &GeneratorConfig, oracle: &OracleCoefficients) -> Result<Dataset> {
    if cfg.n_ratings < tracks.len() {
        return Err(Error::ConfigInfeasible(format!(
            "{} ratings cannot cover {} tracks",
            cfg.n_ratings,
            tracks.len()
        )));
    }
    if cfg.n_users == 0 || cfg.n_ratings > tracks.len() * cfg.n_users {
        return Err(Error::ConfigInfeasible("not enough (track, user) pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a71_0000_0001);
    let susceptibility: Vec<f64> = (0..cfg.n_users).map(|_| symmetric(&mut rng, cfg.user_spread)).collect();
    let latents = tracks
        .iter()
        .map(|t| oracle_latents(t, oracle))
        .collect::<Result<Vec<_>>>()?;

    let mut taken: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut pairs = Vec::with_capacity(cfg.n_ratings);
    for t in 0..tracks.len() {
        let u = rng.random_range(0..cfg.n_users);
        taken.insert((t, u));
        pairs.push((t, u));
    }
    while pairs.len() < cfg.n_ratings {
        let pair = (rng.random_range(0..tracks.len()), rng.random_range(0..cfg.n_users));
        if taken.insert(pair) {
            pairs.push(pair);
        }
    }

    let ratings = pairs
        .into_iter()
        .map(|(t, u)| {
            let mut stars = [0u8; 4];
            for c in Category::ALL {
                let offset = match c {
                    Category::Nausea | Category::Intensity => susceptibility[u],
                    _ => 0.0,
                };
                stars[c.index()] = star(latents[t][c.index()] + offset + symmetric(&mut rng, cfg.noise_spread));
            }
            RatingRecord::new(tracks[t].id(), user_id(u), Stars(stars))
        })
        .collect();
    Dataset::new(tracks, ratings)
}

pub fn track_id(i: usize) -> String {
    format!("coaster-{i:03}")
}

/// Tracks for a dataset: levels cycle from a seeded starting point so every
/// level is equally represented.
pub fn generate_tracks(cfg: &GeneratorConfig) -> Result<Vec<Track>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let offset = rng.random_range(0..LEVELS.len());
    (0..cfg.n_tracks)
        .map(|i| {
            let level = (offset + i) % LEVELS.len();
            let palette = cfg.palette(type_of_level(LEVELS[level]));
            let track_seed: u64 = rng.random();
            Ok(generate_track_at_level(track_seed, level, palette)?.with_id(track_id(i)))
        })
        .collect()
}

/// Tracks plus simulated ratings under `oracle`.
pub fn generate_dataset(cfg: &GeneratorConfig, oracle: &OracleCoefficients) -> Result<Dataset> {
    let tracks = generate_tracks(cfg)?;
    simulate_ratings(tracks, cfg, oracle)
}
