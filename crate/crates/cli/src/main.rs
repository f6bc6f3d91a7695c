use std::path::{Path, PathBuf};
use std::process::ExitCode;

use std::collections::BTreeMap;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use volchem_core::classifier::{train, ClassLabel, TrainConfig};
use volchem_core::compiler::{check_budget, compile, InstructionSequence, PoolWells};
use volchem_core::encoder::{emit_write_instructions, layout, Dataset, EncodingPlan};
use volchem_core::harness::{
    run_calibration, run_mnist, run_validation, ExperimentConfig, ExperimentKind,
};
use volchem_core::hplc::{measure, quantify, CalibrationCurve, Chromatogram, HplcProfile};
use volchem_core::mixture::{AnalyteId, AnalyteRegistry, Deck, PlateDims};
use volchem_core::robot::execute;
use volchem_core::TrainedClassifier;

#[derive(Parser)]
#[command(
    name = "volchem",
    version,
    about = "Volumetric chemical perceptron simulator"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; with --n-seeds, the first of a consecutive range.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    n_seeds: Option<usize>,
    #[arg(long, global = true, value_enum)]
    noise: Option<Toggle>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Lay out datasets on the data plate and emit the write program.
    Encode {
        /// Datasets as a JSON array or JSON lines of {"analyte", "bits"}.
        datasets: PathBuf,
        /// Reserve a constant-1 well for a classifier bias.
        #[arg(long)]
        bias_well: bool,
    },
    /// Train a perceptron on labelled binary vectors.
    Train {
        /// JSON {"foreground", "features": [[0|1..]..], "labels": ["match"|"mismatch"..]}.
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long)]
        no_bias: bool,
    },
    /// Compile a classifier into a pooling program.
    Compile {
        classifier: PathBuf,
        /// Encoding plan written by `encode`.
        plan: PathBuf,
        /// Which pair of output wells receives the pools.
        #[arg(long, default_value_t = 0)]
        pool_index: usize,
    },
    /// Execute programs in order on a fresh deck and read every pool.
    Run {
        /// JSON-lines programs, run in the order given.
        #[arg(required = true)]
        programs: Vec<PathBuf>,
        /// Calibration curve JSON; the detector's ideal inverse when absent.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Quantify a chromatogram CSV.
    Quantify {
        chromatogram: PathBuf,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Run one of the reference experiments.
    Experiment {
        #[arg(value_enum)]
        kind: Kind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Mnist,
    Validate,
    Calibrate,
}

impl Cli {
    fn experiment_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed_range(seed, self.n_seeds.unwrap_or(1));
        } else if let Some(n) = self.n_seeds {
            let first = cfg.seeds[0];
            cfg = cfg.with_seed_range(first, n);
        }
        match self.noise {
            Some(Toggle::On) => cfg.noise.enabled = true,
            Some(Toggle::Off) => cfg.noise.enabled = false,
            None => {}
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> Result<PathBuf> {
        let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&dir)
            .map_err(|e| volchem_core::Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| volchem_core::Error::Io(format!("{}: {e}", path.display())).into())
}

fn write(dir: &Path, name: &str, body: impl AsRef<[u8]>) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, body)
        .map_err(|e| volchem_core::Error::Io(format!("{}: {e}", p.display())).into())
}

fn load_calibration(path: Option<&Path>, profile: &HplcProfile) -> Result<CalibrationCurve> {
    Ok(match path {
        Some(p) => CalibrationCurve::from_json(&read(p)?)?,
        None => CalibrationCurve::ideal(profile),
    })
}

fn named(q: &BTreeMap<AnalyteId, f64>, reg: &AnalyteRegistry) -> serde_json::Value {
    q.iter()
        .map(|(id, c)| {
            let name = reg
                .get(*id)
                .map_or_else(|_| id.to_string(), |a| a.name.clone());
            (name, serde_json::json!(c))
        })
        .collect::<serde_json::Map<_, _>>()
        .into()
}

#[derive(serde::Deserialize)]
struct TrainingData {
    foreground: String,
    features: Vec<Vec<u8>>,
    labels: Vec<ClassLabel>,
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.experiment_config()?;
    let dir = cli.out_dir(&cfg)?;
    match &cli.command {
        Command::Encode {
            datasets,
            bias_well,
        } => {
            let data = Dataset::parse_many(&read(datasets)?)?;
            let n = data.first().map_or(0, |d| d.bits.len());
            let mut plan = layout(n, PlateDims::WELLS_384)?.with_write_volume(cfg.write_volume_ul);
            if *bias_well {
                plan = plan.with_bias_well()?;
            }
            let seq = emit_write_instructions(&data, &plan)?;
            write(&dir, "plan.json", plan.to_json())?;
            write(&dir, "write.jsonl", seq.to_jsonl())?;
            println!(
                "{} datasets x {} bits: {} write transfers",
                data.len(),
                n,
                seq.len()
            );
        }
        Command::Train {
            data,
            epochs,
            no_bias,
        } => {
            let d: TrainingData =
                serde_json::from_str(&read(data)?).map_err(volchem_core::Error::from)?;
            let features: Vec<Vec<bool>> = d
                .features
                .iter()
                .map(|x| x.iter().map(|&b| b != 0).collect())
                .collect();
            let tc = TrainConfig {
                epochs: *epochs,
                seed: cfg.seeds[0],
                fit_bias: !no_bias,
                ..TrainConfig::default()
            };
            let report = train(&features, &d.labels, &tc, &d.foreground)?;
            write(&dir, "classifier.json", report.classifier.to_json())?;
            println!(
                "training accuracy {:.4} after {} epochs (converged: {})",
                report.training_accuracy, report.epochs_run, report.converged
            );
        }
        Command::Compile {
            classifier,
            plan,
            pool_index,
        } => {
            let c = TrainedClassifier::from_json(&read(classifier)?)?;
            let plan = EncodingPlan::from_json(&read(plan)?)?;
            let pools = PoolWells::nth(*pool_index, PlateDims::WELLS_96)
                .context("pool index beyond the output plate")?;
            let seq = compile(&c, &plan, pools, &cfg.compile)?;
            write(&dir, "pool.jsonl", seq.to_jsonl())?;
            println!(
                "{} transfers, {} tips, pool volume {} uL, {} weights dropped",
                seq.len(),
                seq.n_tips(),
                seq.meta.pool_volume_ul.unwrap_or(0.0),
                seq.meta.dropped.len()
            );
        }
        Command::Run {
            programs,
            calibration,
        } => {
            let mut seq = InstructionSequence::new("run");
            for p in programs {
                seq = seq.then(&InstructionSequence::from_jsonl(&read(p)?)?);
            }
            let deck = Deck::standard(AnalyteRegistry::phenols());
            let cost = check_budget(&seq, &deck)?;
            let (deck, log) = execute(&seq, &deck, &cfg.noise.robot(), cfg.seeds[0])?;
            write(&dir, "execution_log.csv", log.to_csv())?;
            write(&dir, "cost.json", cost.to_json())?;
            write(&dir, "data_plate.json", deck.data.to_json())?;
            write(&dir, "output_plate.json", deck.output.to_json())?;
            let profile = HplcProfile::phenols();
            let cal = load_calibration(calibration.as_deref(), &profile)?;
            let mut readings = serde_json::Map::new();
            for (k, (well, sol)) in deck.output.occupied().enumerate() {
                let chrom = measure(
                    sol,
                    &profile,
                    &cfg.noise.hplc(),
                    cfg.seeds[0].wrapping_add(k as u64 + 1),
                )?;
                write(
                    &dir,
                    &format!("chromatogram_out_{well}.csv"),
                    chrom.to_csv(),
                )?;
                let q = quantify(&chrom, &cal, &profile)?;
                readings.insert(format!("out:{well}"), named(&q, &deck.registry));
            }
            let body = serde_json::to_string_pretty(&readings)?;
            write(&dir, "pools.json", &body)?;
            println!("{body}");
        }
        Command::Quantify {
            chromatogram,
            calibration,
        } => {
            let chrom = Chromatogram::from_csv(&read(chromatogram)?)?;
            let profile = HplcProfile::phenols();
            let cal = load_calibration(calibration.as_deref(), &profile)?;
            let q = quantify(&chrom, &cal, &profile)?;
            let named = named(&q, &AnalyteRegistry::phenols());
            println!("{}", serde_json::to_string_pretty(&named)?);
        }
        Command::Experiment { kind } => {
            let mut cfg = cfg.clone();
            cfg.experiment = match kind {
                Kind::Mnist => ExperimentKind::Mnist,
                Kind::Validate => ExperimentKind::Validate,
                Kind::Calibrate => ExperimentKind::Calibrate,
            };
            match cfg.experiment {
                ExperimentKind::Mnist => {
                    let r = run_mnist(&cfg)?;
                    r.write_outputs(&dir)?;
                    print!("{}", r.table_csv());
                    let total = r.runs.len();
                    let good = r
                        .runs
                        .iter()
                        .filter(|x| x.n_correct() == r.n_cells())
                        .count();
                    println!("all cells correct in {good}/{total} runs");
                }
                ExperimentKind::Validate => {
                    let r = run_validation(&cfg)?;
                    r.write_outputs(&dir)?;
                    println!(
                        "median accuracy {}/{}; differential error mean {:.4}, 3 sigma {:.4} mg/mL",
                        r.median_accuracy(),
                        r.n_vectors(),
                        r.differential.mean,
                        r.differential.three_sigma
                    );
                }
                ExperimentKind::Calibrate => {
                    let r = run_calibration(&cfg)?;
                    r.write_outputs(&dir)?;
                    println!("{}", r.summary_json());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.command {
        Command::Experiment { .. } => "error",
        _ => "warn",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<volchem_core::Error>()
                .map(|e| e.kind())
                .unwrap_or("Error");
            let line = serde_json::json!({ "kind": kind, "message": format!("{e:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
