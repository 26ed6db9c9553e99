use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rcvr_cli::api::{parse_request, predict};
use rcvr_cli::server::{self, AppState, DEFAULT_BIND};
use rcvr_core::error::{Error, Result};
use rcvr_core::eval::{dataset_examples, render_report, run_protocol_with};
use rcvr_core::features::{extract_custom, extract_sequence, features_csv};
use rcvr_core::net::{init_model, NetworkConfig, NetworkModel, PRESETS};
use rcvr_core::ratings::{AggregationMode, Dataset};
use rcvr_core::synth::{generate_dataset, GeneratorConfig, OracleCoefficients};
use rcvr_core::track::{read_track_file, write_track_file, Track};

#[derive(Parser)]
#[command(name = "rcvr", version, about = "Rollercoaster ride rating toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic rated dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Generator config JSON; missing keys take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Oracle coefficient JSON; defaults to the shipped table.
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Switch off rater susceptibility and rating noise.
        #[arg(long)]
        noiseless: bool,
    },
    /// Derive speeds and g-forces for a geometry document or re-derive a track's.
    Annotate {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the 25 ride parameters as CSV, or one track's per-point rows.
    Features {
        tracks: Vec<PathBuf>,
        #[arg(long, conflicts_with = "tracks")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        sequence: bool,
    },
    /// Fit a model on every track of a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "combined", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        preset: String,
        /// Network config JSON, used instead of the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "average")]
        aggregation: AggregationMode,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict star ratings for a track or geometry document.
    Predict {
        #[arg(long, env = "RCVR_MODEL")]
        model: PathBuf,
        #[arg(long)]
        track: PathBuf,
    },
    /// Cross-validate presets under aggregation modes and write a report.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = PRESETS.map(String::from))]
        presets: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = AggregationMode::ALL)]
        modes: Vec<AggregationMode>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override every preset's iteration count.
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Serve predictions over HTTP.
    Serve {
        #[arg(long, env = "RCVR_MODEL")]
        model: Option<PathBuf>,
        #[arg(long, default_value = DEFAULT_BIND)]
        bind: String,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).map_err(|e| Error::MalformedSyntax(format!("{}: {e}", path.display())))
}

/// Accepts a dataset directory or its manifest file.
fn load_dataset(path: &Path) -> Result<Dataset> {
    if path.is_dir() {
        Dataset::load(path.join("manifest.json"))
    } else {
        Dataset::load(path)
    }
}

fn stdout(bytes: &[u8]) -> Result<()> {
    std::io::stdout()
        .lock()
        .write_all(bytes)
        .map_err(|e| Error::io("<stdout>", e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            seed,
            config,
            oracle,
            noiseless,
        } => {
            let mut cfg: GeneratorConfig = match &config {
                Some(p) => parse_json(p)?,
                None => GeneratorConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if noiseless {
                cfg.user_spread = 0.0;
                cfg.noise_spread = 0.0;
            }
            let oracle = match &oracle {
                Some(p) => OracleCoefficients::parse(&read(p)?)?,
                None => OracleCoefficients::default(),
            };
            let ds = generate_dataset(&cfg, &oracle)?;
            ds.save(&out)?;
            write(&out.join("oracle-coefficients.json"), &oracle.to_json())?;
            eprintln!(
                "wrote {} tracks and {} ratings to {}",
                ds.tracks().count(),
                ds.ratings().len(),
                out.display()
            );
            Ok(())
        }
        Command::Annotate { input, out } => {
            let track = parse_request(&read(&input)?)?;
            write_track_file(&out, &track)
        }
        Command::Features {
            tracks,
            dataset,
            sequence,
        } => {
            let loaded: Vec<Track> = match &dataset {
                Some(p) => load_dataset(p)?.tracks().cloned().collect(),
                None => tracks.iter().map(read_track_file).collect::<Result<_>>()?,
            };
            if loaded.is_empty() {
                return Err(Error::EmptyInput);
            }
            if sequence {
                let [track] = loaded.as_slice() else {
                    return Err(Error::InvalidConfig("--sequence takes exactly one track".into()));
                };
                let mut text = String::from("dx,dy,dz,speed,g_longitudinal,g_lateral,g_vertical\n");
                for row in extract_sequence(track)?.rows {
                    let cells: Vec<String> = row.iter().map(|x| rcvr_core::numfmt::canonical_f64(*x)).collect();
                    text.push_str(&cells.join(","));
                    text.push('\n');
                }
                stdout(text.as_bytes())
            } else {
                let vectors = loaded.iter().map(extract_custom).collect::<Result<Vec<_>>>()?;
                let csv = features_csv(loaded.iter().map(Track::id).zip(&vectors));
                stdout(csv.as_bytes())
            }
        }
        Command::Train {
            dataset,
            preset,
            config,
            aggregation,
            iterations,
            learning_rate,
            seed,
            out,
        } => {
            let mut cfg = match &config {
                Some(p) => parse_json(p)?,
                None => NetworkConfig::preset(&preset)?,
            };
            cfg.iterations = iterations.unwrap_or(cfg.iterations);
            cfg.learning_rate = learning_rate.unwrap_or(cfg.learning_rate);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let ds = load_dataset(&dataset)?;
            let examples = dataset_examples(&ds, aggregation, cfg.input_mode)?;
            let mut model = init_model(&cfg)?;
            let report = model.train(&examples, None)?;
            model.save(&out)?;
            let summary = serde_json::json!({
                "model": out.display().to_string(),
                "examples": examples.len(),
                "iterations": report.loss_history.len(),
                "initial_loss": report.loss_history.first(),
                "final_loss": report.loss_history.last(),
            });
            stdout(format!("{summary}\n").as_bytes())
        }
        Command::Predict { model, track } => {
            let model = NetworkModel::load(&model)?;
            let track = parse_request(&read(&track)?)?;
            stdout(&predict(&model, &track)?.to_bytes())
        }
        Command::Eval {
            dataset,
            presets,
            modes,
            folds,
            seed,
            iterations,
            out_dir,
        } => {
            let ds = load_dataset(&dataset)?;
            let configs = presets
                .iter()
                .map(|p| {
                    let mut c = NetworkConfig::preset(p)?;
                    c.iterations = iterations.unwrap_or(c.iterations);
                    Ok(c)
                })
                .collect::<Result<Vec<_>>>()?;
            let report = run_protocol_with(&ds, &configs, &modes, folds, seed, |cell| {
                let status = match &cell.outcome {
                    Ok(o) => format!("nausea {:.1}%", o.metrics[2].percent_correct),
                    Err((code, _)) => format!("failed: {code}"),
                };
                eprintln!("{} {} fold {}: {status}", cell.config, cell.mode, cell.fold);
            })?;
            let rendered = render_report(&report);
            rendered.write(&out_dir)?;
            stdout(rendered.table.as_bytes())
        }
        Command::Serve { model, bind } => {
            let loaded = model.as_deref().map(NetworkModel::load).transpose()?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
            runtime
                .block_on(server::serve(AppState::new(loaded, model), &bind))
                .map_err(|e| Error::io(&bind, e))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // usage problems exit 2, --help and --version exit 0
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
