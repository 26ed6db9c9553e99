//! Grouped k-fold evaluation over network presets and aggregation modes.
//!
//! Every (config, mode, fold) cell trains a fresh model on the other folds'
//! tracks and scores all four heads on the held-out tracks. A failing cell is
//! recorded and the sweep moves on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::{init_model, Example, InputMode, NetInput, NetworkConfig, NetworkModel, HEADS};
use crate::ratings::{assemble_examples, hex, split_folds, AggregationMode, Category, Dataset, Stars};
use crate::track::Track;

/// Largest possible star error.
pub const MAX_STAR_ERROR: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    /// Exact-match rate in `[0, 100]`.
    pub percent_correct: f64,
    /// Mean absolute star error in `[0, 4]`.
    pub mean_error: f64,
}

pub fn exact_match_percent(predicted: &[u8], target: &[u8]) -> f64 {
    assert_eq!(predicted.len(), target.len());
    if target.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(target).filter(|(p, t)| p == t).count();
    100.0 * hits as f64 / target.len() as f64
}

pub fn mean_abs_error(predicted: &[u8], target: &[u8]) -> f64 {
    assert_eq!(predicted.len(), target.len());
    if target.is_empty() {
        return 0.0;
    }
    let total: u32 = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| u32::from(p.abs_diff(*t)))
        .sum();
    f64::from(total) / target.len() as f64
}

/// Per-category metrics of `predicted` against `target`, pairwise.
pub fn score(predicted: &[Stars], target: &[Stars]) -> [Metrics; HEADS] {
    Category::ALL.map(|c| {
        let p: Vec<u8> = predicted.iter().map(|s| s.get(c)).collect();
        let t: Vec<u8> = target.iter().map(|s| s.get(c)).collect();
        Metrics {
            percent_correct: exact_match_percent(&p, &t),
            mean_error: mean_abs_error(&p, &t),
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub metrics: [Metrics; HEADS],
    /// Training loss before each update.
    pub train_loss: Vec<f64>,
    /// Held-out nausea mean error after each update.
    pub validation_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub config: String,
    pub mode: AggregationMode,
    pub fold: usize,
    pub train_tracks: Vec<String>,
    pub test_tracks: Vec<String>,
    /// Digest of the training tracks' serialized bytes and targets.
    pub train_hash: String,
    pub test_examples: usize,
    /// `Err` carries the machine-readable error code and message.
    pub outcome: std::result::Result<CellOutcome, (String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

fn spread(values: &[f64]) -> Spread {
    if values.is_empty() {
        return Spread {
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Spread { mean, std: var.sqrt() }
}

/// Cross-fold statistics for one (config, mode) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub config: String,
    pub mode: AggregationMode,
    pub completed_folds: usize,
    pub percent_correct: [Spread; HEADS],
    pub mean_error: [Spread; HEADS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset_hash: String,
    pub seed: u64,
    pub folds: usize,
    /// Ordered by config, then mode, then fold, as requested.
    pub cells: Vec<Cell>,
}

impl EvalReport {
    pub fn summaries(&self) -> Vec<Summary> {
        let mut groups: Vec<((String, AggregationMode), Vec<&CellOutcome>)> = Vec::new();
        for cell in &self.cells {
            let key = (cell.config.clone(), cell.mode);
            if groups.last().map(|(k, _)| k != &key).unwrap_or(true) {
                groups.push((key, Vec::new()));
            }
            if let Ok(o) = &cell.outcome {
                groups.last_mut().unwrap().1.push(o);
            }
        }
        groups
            .into_iter()
            .map(|((config, mode), outcomes)| {
                let stat = |f: &dyn Fn(&Metrics) -> f64| {
                    Category::ALL
                        .map(|c| spread(&outcomes.iter().map(|o| f(&o.metrics[c.index()])).collect::<Vec<_>>()))
                };
                Summary {
                    config,
                    mode,
                    completed_folds: outcomes.len(),
                    percent_correct: stat(&|m| m.percent_correct),
                    mean_error: stat(&|m| m.mean_error),
                }
            })
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.outcome.is_err())
    }
}

/// Name used in reports for a config: the preset name when it matches one.
pub fn config_label(config: &NetworkConfig) -> String {
    for name in crate::net::PRESETS {
        let preset = NetworkConfig::preset(name).expect("known preset");
        if preset.input_mode == config.input_mode
            && preset.hidden_layers == config.hidden_layers
            && preset.hidden_size == config.hidden_size
        {
            return name.to_string();
        }
    }
    format!(
        "{}-{}x{}",
        serde_json::to_value(config.input_mode).unwrap().as_str().unwrap(),
        config.hidden_layers,
        config.hidden_size
    )
}

fn train_hash(tracks: &BTreeMap<String, &Track>, examples: &[Example], ids: &[String]) -> String {
    let mut h = Sha256::new();
    for (id, ex) in ids.iter().zip(examples) {
        h.update(id.as_bytes());
        h.update(crate::track::serialize_track(tracks[id]));
        for t in &ex.targets {
            h.update(t.0);
        }
    }
    hex(&h.finalize())
}

/// One example per track holding every target the mode assigns to it.
fn grouped_examples(
    inputs: &BTreeMap<String, NetInput>,
    targets: &BTreeMap<String, Vec<Stars>>,
    ids: &[String],
) -> Vec<Example> {
    ids.iter()
        .map(|id| Example {
            input: inputs[id].clone(),
            targets: targets[id].clone(),
        })
        .collect()
}

/// Every track of `ds` as one example carrying all its targets under `mode`,
/// with the representations `input` needs. Used to fit a deployable model.
pub fn dataset_examples(ds: &Dataset, mode: AggregationMode, input: InputMode) -> Result<Vec<Example>> {
    let mut targets: BTreeMap<String, Vec<Stars>> = BTreeMap::new();
    for e in assemble_examples(ds, mode)? {
        targets.entry(e.track_id).or_default().push(e.target);
    }
    targets
        .into_iter()
        .map(|(id, targets)| {
            let track = ds
                .track(&id)
                .ok_or_else(|| Error::invariant("rated track exists", None))?;
            Ok(Example {
                input: NetInput::from_track(track, input)?,
                targets,
            })
        })
        .collect()
}

fn run_cell(config: &NetworkConfig, train: &[Example], test: &[Example]) -> Result<CellOutcome> {
    let mut model = init_model(config)?;
    let report = model.train(train, Some(test))?;
    let (predicted, target) = predict_all(&model, test)?;
    Ok(CellOutcome {
        metrics: score(&predicted, &target),
        train_loss: report.loss_history,
        validation_error: report.validation_mae,
    })
}

/// Pairs each held-out target with the model's stars for its track.
fn predict_all(model: &NetworkModel, test: &[Example]) -> Result<(Vec<Stars>, Vec<Stars>)> {
    let mut predicted = Vec::new();
    let mut target = Vec::new();
    for ex in test {
        let stars = model.predict_stars(&ex.input)?;
        for t in &ex.targets {
            predicted.push(stars);
            target.push(*t);
        }
    }
    Ok((predicted, target))
}

/// Runs every (config, mode, fold) cell. Fold assignment depends only on
/// `seed`, so all configs and modes see the same splits.
pub fn run_protocol(
    ds: &Dataset,
    configs: &[NetworkConfig],
    modes: &[AggregationMode],
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    run_protocol_with(ds, configs, modes, k, seed, |_| {})
}

/// As [`run_protocol`], calling `progress` after each finished cell.
pub fn run_protocol_with(
    ds: &Dataset,
    configs: &[NetworkConfig],
    modes: &[AggregationMode],
    k: usize,
    seed: u64,
    mut progress: impl FnMut(&Cell),
) -> Result<EvalReport> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    for c in configs {
        c.validate()?;
    }
    let tracks: BTreeMap<String, &Track> = ds.tracks().map(|t| (t.id().to_string(), t)).collect();
    // both representations, so any config can read what it needs
    let inputs = tracks
        .iter()
        .map(|(id, t)| Ok((id.clone(), NetInput::from_track(t, InputMode::Combined)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    let mut cells = Vec::new();
    for config in configs {
        let label = config_label(config);
        for &mode in modes {
            let assembled = assemble_examples(ds, mode)?;
            let mut targets: BTreeMap<String, Vec<Stars>> = BTreeMap::new();
            for e in &assembled {
                targets.entry(e.track_id.clone()).or_default().push(e.target);
            }
            let folds = split_folds(&assembled, k, seed)?;
            for (f, fold) in folds.iter().enumerate() {
                let held_out: BTreeSet<&String> = fold.track_ids.iter().collect();
                let train_ids: Vec<String> = targets.keys().filter(|id| !held_out.contains(id)).cloned().collect();
                let train = grouped_examples(&inputs, &targets, &train_ids);
                let test = grouped_examples(&inputs, &targets, &fold.track_ids);
                let cell = Cell {
                    config: label.clone(),
                    mode,
                    fold: f,
                    train_hash: train_hash(&tracks, &train, &train_ids),
                    test_examples: fold.example_indices.len(),
                    outcome: run_cell(config, &train, &test).map_err(|e| (e.code().to_string(), e.to_string())),
                    train_tracks: train_ids,
                    test_tracks: fold.track_ids.clone(),
                };
                progress(&cell);
                cells.push(cell);
            }
        }
    }
    Ok(EvalReport {
        dataset_hash: ds.content_hash(),
        seed,
        folds: k,
        cells,
    })
}

/// Rendered report files.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub table: String,
    pub csv: String,
    /// File stem and contents, one per cell that finished training.
    pub curves: Vec<(String, String)>,
}

/// Fixed precision keeps reruns byte-identical across platforms' float printing.
fn fixed(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.6}")
    }
}

pub const CSV_HEADER: [&str; 17] = [
    "config",
    "aggregation",
    "fold",
    "status",
    "train_tracks",
    "test_tracks",
    "test_examples",
    "fun_percent",
    "fun_mean_error",
    "intensity_percent",
    "intensity_mean_error",
    "nausea_percent",
    "nausea_mean_error",
    "price_percent",
    "price_mean_error",
    "error_code",
    "train_hash",
];

pub fn render_report(report: &EvalReport) -> RenderedReport {
    let summaries = report.summaries();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for cell in &report.cells {
        let mut row = vec![cell.config.clone(), cell.mode.name().to_string(), cell.fold.to_string()];
        match &cell.outcome {
            Ok(o) => {
                row.push("ok".into());
                row.push(cell.train_tracks.len().to_string());
                row.push(cell.test_tracks.len().to_string());
                row.push(cell.test_examples.to_string());
                for m in &o.metrics {
                    row.push(fixed(m.percent_correct));
                    row.push(fixed(m.mean_error));
                }
                row.push(String::new());
            }
            Err((code, _)) => {
                row.push("failed".into());
                row.push(cell.train_tracks.len().to_string());
                row.push(cell.test_tracks.len().to_string());
                row.push(cell.test_examples.to_string());
                row.extend(std::iter::repeat_n(String::new(), 2 * HEADS));
                row.push(code.clone());
            }
        }
        row.push(cell.train_hash.clone());
        w.write_record(&row).expect("in-memory write");
    }
    for s in &summaries {
        for (label, pick) in [("mean", 0), ("std", 1)] {
            let get = |sp: &Spread| if pick == 0 { sp.mean } else { sp.std };
            let mut row = vec![
                s.config.clone(),
                s.mode.name().to_string(),
                label.to_string(),
                "summary".into(),
            ];
            row.extend([String::new(), String::new(), s.completed_folds.to_string()]);
            for c in 0..HEADS {
                row.push(fixed(get(&s.percent_correct[c])));
                row.push(fixed(get(&s.mean_error[c])));
            }
            row.extend([String::new(), String::new()]);
            w.write_record(&row).expect("in-memory write");
        }
    }
    let csv = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");

    let mut table = String::new();
    writeln!(
        table,
        "dataset {}  seed {}  folds {}",
        report.dataset_hash, report.seed, report.folds
    )
    .unwrap();
    writeln!(table).unwrap();
    writeln!(
        table,
        "{:<12} {:<12} {:>5}  {:>15}  {:>13}  {:>13}  {:>13}  {:>13}",
        "config", "aggregation", "folds", "nausea %", "nausea err", "fun err", "intensity err", "price err"
    )
    .unwrap();
    let pm = |s: &Spread, digits: usize| {
        if s.mean.is_nan() {
            "n/a".to_string()
        } else {
            format!("{:.*} ± {:.*}", digits, s.mean, digits, s.std)
        }
    };
    let (fun, intensity, nausea, price) = (
        Category::Fun.index(),
        Category::Intensity.index(),
        Category::Nausea.index(),
        Category::Price.index(),
    );
    for s in &summaries {
        writeln!(
            table,
            "{:<12} {:<12} {:>5}  {:>15}  {:>13}  {:>13}  {:>13}  {:>13}",
            s.config,
            s.mode.name(),
            s.completed_folds,
            pm(&s.percent_correct[nausea], 1),
            pm(&s.mean_error[nausea], 2),
            pm(&s.mean_error[fun], 2),
            pm(&s.mean_error[intensity], 2),
            pm(&s.mean_error[price], 2),
        )
        .unwrap();
    }
    let failures: Vec<&Cell> = report.failures().collect();
    if !failures.is_empty() {
        writeln!(table).unwrap();
        for cell in failures {
            let (code, message) = cell.outcome.as_ref().unwrap_err();
            writeln!(
                table,
                "failed: {} {} fold {}: {code}: {message}",
                cell.config,
                cell.mode.name(),
                cell.fold
            )
            .unwrap();
        }
    }

    let curves = report
        .cells
        .iter()
        .filter_map(|cell| {
            let o = cell.outcome.as_ref().ok()?;
            let mut text = String::from("iteration,train_loss,validation_nausea_error\n");
            for (i, (loss, err)) in o.train_loss.iter().zip(&o.validation_error).enumerate() {
                writeln!(text, "{},{},{}", i + 1, fixed(*loss), fixed(*err)).unwrap();
            }
            Some((format!("{}_{}_fold{}", cell.config, cell.mode.name(), cell.fold), text))
        })
        .collect();

    RenderedReport { table, csv, curves }
}

impl RenderedReport {
    /// Writes `report.txt`, `report.csv` and `curves/*.csv` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let curves = dir.join("curves");
        std::fs::create_dir_all(&curves).map_err(|e| Error::io(&curves, e))?;
        let write = |path: std::path::PathBuf, body: &str| std::fs::write(&path, body).map_err(|e| Error::io(&path, e));
        write(dir.join("report.txt"), &self.table)?;
        write(dir.join("report.csv"), &self.csv)?;
        for (stem, body) in &self.curves {
            write(curves.join(format!("{stem}.csv")), body)?;
        }
        Ok(())
    }
}
