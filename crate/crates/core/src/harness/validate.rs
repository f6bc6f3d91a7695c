//! Random-vector validation: sixteen trials of three vectors each, read
//! back through the full chemical pipeline.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, NoiseSettings, ValidationConfig};
use super::pipeline::{read_pools, registry_with_stock, run_ladder, tags};
use super::plot;
use super::stats::{median, quantile, ErrorSummary, Histogram};
use crate::classifier::{threshold, ClassLabel, TrainedClassifier};
use crate::compiler::{
    check_budget, compile, quantize, CompileConfig, CostReport, PoolVolume, PoolWells,
};
use crate::encoder::{emit_write_instructions, layout, written_concentration, Dataset};
use crate::error::{Error, Result};
use crate::hplc::HplcProfile;
use crate::mixture::{AnalyteId, Deck, PlateDims};
use crate::readout::{oracle_z, results_csv, ResultRow};
use crate::rng::sub_seed;
use crate::robot::execute;

pub const ROLES: [&str; 3] = ["mismatch", "boundary", "match"];

/// One classifier and three vectors: a strong mismatch, one near the
/// decision boundary and a strong match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub weights: Vec<f64>,
    /// In [`ROLES`] order.
    pub vectors: Vec<Vec<bool>>,
    /// Analyte carrying each vector, same order.
    pub analytes: Vec<AnalyteId>,
}

fn dot(w: &[f64], x: &[bool]) -> f64 {
    w.iter().zip(x).filter(|(_, &b)| b).map(|(w, _)| w).sum()
}

impl TrialSpec {
    pub fn dot(&self, role: usize) -> f64 {
        dot(&self.weights, &self.vectors[role])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.weights.len();
        if n == 0 {
            return Err(Error::EmptyInput("trial weights"));
        }
        if self.vectors.len() != 3 || self.analytes.len() != 3 {
            return Err(Error::InvalidConfig(
                "a trial needs exactly three vectors and analytes".into(),
            ));
        }
        if let Some(v) = self.vectors.iter().find(|v| v.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                got: v.len(),
            });
        }
        if self.weights.iter().any(|w| !(w.abs() <= 1.0)) {
            return Err(Error::InvalidConfig(
                "trial weights must lie in [-1, 1]".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(a) = self.analytes.iter().find(|a| !seen.insert(**a)) {
            return Err(Error::AnalyteCollision(*a));
        }
        let (zm, zb, zp) = (self.dot(0), self.dot(1), self.dot(2));
        if !(zm < zb && zp > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "trial margins out of order: {zm:.3}, {zb:.3}, {zp:.3}"
            )));
        }
        Ok(())
    }
}

/// Sign of `w·x` after the weights pass through the compiler's volume grid.
fn compiled_sign_agrees(w: &[f64], x: &[bool], compile: &CompileConfig) -> bool {
    if !compile.quantize {
        return true;
    }
    let q: f64 = w
        .iter()
        .zip(x)
        .filter(|(_, &b)| b)
        .map(|(&w, _)| w.signum() * quantize(w.abs() * compile.v_o_ul, compile))
        .sum();
    threshold(q) == threshold(dot(w, x))
}

/// Draws trial specs from `seed`. Weights are uniform in [-1, 1]; vectors
/// are picked by margin among `candidates` random binary vectors.
pub fn generate_trials(
    cfg: &ValidationConfig,
    compile: &CompileConfig,
    seed: u64,
) -> Result<Vec<TrialSpec>> {
    let analytes = [AnalyteId(1), AnalyteId(2), AnalyteId(3)];
    let mut trials = Vec::with_capacity(cfg.n_trials);
    for t in 0..cfg.n_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &[tags::TRIALS, t as u64]));
        let spec = (0..1000)
            .find_map(|_| {
                let w: Vec<f64> = (0..cfg.n_bits).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let xs: Vec<Vec<bool>> = (0..cfg.candidates)
                    .map(|_| (0..cfg.n_bits).map(|_| rng.gen_bool(0.5)).collect())
                    .collect();
                let zs: Vec<f64> = xs.iter().map(|x| dot(&w, x)).collect();
                let max = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min = zs.iter().cloned().fold(f64::INFINITY, f64::min);
                let max_abs = max.abs().max(min.abs());
                if !(max > 0.0 && min < 0.0) {
                    return None;
                }
                let pick = |rng: &mut ChaCha8Rng, ok: &dyn Fn(f64, &[bool]) -> bool| {
                    let idx: Vec<usize> = (0..xs.len()).filter(|&i| ok(zs[i], &xs[i])).collect();
                    idx.choose(rng).copied()
                };
                let mis = pick(&mut rng, &|z, _| z <= cfg.strong_fraction * min)?;
                let bnd = pick(&mut rng, &|z, x| {
                    z != 0.0
                        && z.abs() <= cfg.boundary_fraction * max_abs
                        && compiled_sign_agrees(&w, x, compile)
                })?;
                let mat = pick(&mut rng, &|z, _| z >= cfg.strong_fraction * max)?;
                let mut order = analytes;
                order.shuffle(&mut rng);
                let spec = TrialSpec {
                    weights: w,
                    vectors: vec![xs[mis].clone(), xs[bnd].clone(), xs[mat].clone()],
                    analytes: order.to_vec(),
                };
                spec.validate().ok().map(|_| spec)
            })
            .ok_or_else(|| Error::InvalidConfig(format!("could not generate trial {t}")))?;
        trials.push(spec);
    }
    Ok(trials)
}

pub fn load_trials(path: &Path) -> Result<Vec<TrialSpec>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingFixtures(format!("{}: {e}", path.display())))?;
    let trials: Vec<TrialSpec> = serde_json::from_str(&text)?;
    if trials.is_empty() {
        return Err(Error::EmptyInput("trials file"));
    }
    for t in &trials {
        t.validate()?;
    }
    Ok(trials)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorOutcome {
    pub seed: u64,
    pub trial: usize,
    pub role: String,
    pub analyte: AnalyteId,
    pub dot: f64,
    pub expected_z: f64,
    pub measured_z: f64,
    pub expected_pos: f64,
    pub expected_neg: f64,
    pub measured_pos: f64,
    pub measured_neg: f64,
}

impl VectorOutcome {
    pub fn expected_label(&self) -> ClassLabel {
        threshold(self.expected_z)
    }

    pub fn measured_label(&self) -> ClassLabel {
        threshold(self.measured_z)
    }

    pub fn correct(&self) -> bool {
        self.expected_label() == self.measured_label()
    }

    pub fn error(&self) -> f64 {
        self.measured_z - self.expected_z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub trials: Vec<TrialSpec>,
    pub outcomes: Vec<VectorOutcome>,
    pub cost: CostReport,
}

impl SeedRun {
    pub fn n_correct(&self) -> usize {
        self.outcomes.iter().filter(|o| o.correct()).count()
    }
}

/// Runs every trial of one seed, each on a fresh deck.
pub fn run_validation_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let v = &cfg.validation;
    let mut compile_cfg = cfg.compile.clone();
    compile_cfg.pool_volume = PoolVolume::Fixed(v.pool_volume_ul);
    let trials = match &v.trials_file {
        Some(p) => load_trials(p)?,
        None => generate_trials(v, &compile_cfg, seed)?,
    };
    let registry = registry_with_stock(cfg.stock_mg_per_ml)?;
    let profile = HplcProfile::phenols();
    let calibration = run_ladder(&registry.ids(), &profile, &cfg.ladder, &cfg.noise, seed)?;
    let robot = cfg.noise.robot();
    let inj = cfg.noise.hplc();
    let c_w = written_concentration(cfg.stock_mg_per_ml, 3);
    let scale = |d: f64| oracle_z(compile_cfg.v_o_ul, v.pool_volume_ul, c_w, d);
    let pools = PoolWells::nth(0, PlateDims::WELLS_96).expect("output plate has two wells");

    let mut outcomes = Vec::with_capacity(3 * trials.len());
    let mut cost = CostReport::empty();
    for (t, spec) in trials.iter().enumerate() {
        let n = spec.weights.len();
        let plan = layout(n, PlateDims::WELLS_384)?.with_write_volume(cfg.write_volume_ul);
        let datasets: Vec<Dataset> = spec
            .analytes
            .iter()
            .zip(&spec.vectors)
            .map(|(&a, x)| Dataset::new(a, x.clone()))
            .collect();
        let writes = emit_write_instructions(&datasets, &plan)?;
        let classifier = TrainedClassifier::new(spec.weights.clone(), 0.0, format!("trial{t}"));
        let pass = compile(&classifier, &plan, pools, &compile_cfg)?;
        let program = writes.then(&pass);
        let deck = Deck::standard(registry.clone());
        cost.merge(&check_budget(&program, &deck)?);
        let (deck, _) = execute(
            &program,
            &deck,
            &robot,
            sub_seed(seed, &[tags::ROBOT, t as u64]),
        )?;
        let read = read_pools(
            &deck,
            pools,
            v.pool_volume_ul,
            &profile,
            &calibration.curve,
            &inj,
            sub_seed(seed, &[tags::HPLC, t as u64]),
        )?;
        for (role, (&a, x)) in spec.analytes.iter().zip(&spec.vectors).enumerate() {
            let pos: f64 = spec
                .weights
                .iter()
                .zip(x)
                .filter(|(w, &b)| b && **w > 0.0)
                .map(|(w, _)| w)
                .sum();
            let neg: f64 = spec
                .weights
                .iter()
                .zip(x)
                .filter(|(w, &b)| b && **w < 0.0)
                .map(|(w, _)| -w)
                .sum();
            let d = dot(&spec.weights, x);
            outcomes.push(VectorOutcome {
                seed,
                trial: t,
                role: ROLES[role].to_string(),
                analyte: a,
                dot: d,
                expected_z: scale(d),
                measured_z: read.result.z(a).ok_or(Error::UnknownAnalyte(a))?,
                expected_pos: scale(pos),
                expected_neg: scale(neg),
                measured_pos: read.pair.positive[&a],
                measured_neg: read.pair.negative[&a],
            });
        }
    }
    Ok(SeedRun {
        seed,
        trials,
        outcomes,
        cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub runs: Vec<SeedRun>,
    pub differential: ErrorSummary,
    pub absolute: ErrorSummary,
    pub noise_scale: f64,
    pub noise_enabled: bool,
}

/// Runs all configured seeds in parallel; results stay in seed order.
pub fn run_validation(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    cfg.validate()?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&s| run_validation_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let diff: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.outcomes.iter().map(|o| o.error()))
        .collect();
    let abs: Vec<f64> = runs
        .iter()
        .flat_map(|r| {
            r.outcomes.iter().flat_map(|o| {
                [
                    o.measured_pos - o.expected_pos,
                    o.measured_neg - o.expected_neg,
                ]
            })
        })
        .collect();
    Ok(ValidationReport {
        differential: ErrorSummary::of(&diff),
        absolute: ErrorSummary::of(&abs),
        noise_scale: cfg.noise.scale(),
        noise_enabled: cfg.noise.enabled,
        runs,
    })
}

impl ValidationReport {
    pub fn accuracies(&self) -> Vec<usize> {
        self.runs.iter().map(SeedRun::n_correct).collect()
    }

    pub fn n_vectors(&self) -> usize {
        self.runs.first().map_or(0, |r| r.outcomes.len())
    }

    pub fn median_accuracy(&self) -> f64 {
        median(
            &self
                .accuracies()
                .iter()
                .map(|&a| a as f64)
                .collect::<Vec<_>>(),
        )
    }

    /// The first run (in seed order) whose accuracy is closest to the
    /// median.
    pub fn median_run(&self) -> Option<&SeedRun> {
        let m = self.median_accuracy();
        self.runs.iter().min_by(|a, b| {
            (a.n_correct() as f64 - m)
                .abs()
                .total_cmp(&(b.n_correct() as f64 - m).abs())
        })
    }

    /// Misclassified outcomes of a run with the 25th percentile of |z| in
    /// that run.
    pub fn misses(run: &SeedRun) -> (Vec<&VectorOutcome>, f64) {
        let zs: Vec<f64> = run.outcomes.iter().map(|o| o.expected_z.abs()).collect();
        (
            run.outcomes.iter().filter(|o| !o.correct()).collect(),
            quantile(&zs, 0.25),
        )
    }

    pub fn results_csv(&self) -> String {
        let rows: Vec<ResultRow> = self
            .runs
            .iter()
            .flat_map(|r| {
                r.outcomes.iter().map(|o| {
                    ResultRow::new(
                        format!("s{}-t{:02}-{}", o.seed, o.trial, o.role),
                        o.analyte,
                        o.expected_z,
                        o.measured_z,
                    )
                })
            })
            .collect();
        results_csv(&rows)
    }

    pub fn pools_csv(&self) -> String {
        let mut out =
            String::from("seed,trial,role,analyte,pool,expected_mg_per_ml,measured_mg_per_ml\n");
        for o in self.runs.iter().flat_map(|r| &r.outcomes) {
            for (pool, e, m) in [
                ("positive", o.expected_pos, o.measured_pos),
                ("negative", o.expected_neg, o.measured_neg),
            ] {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{pool},{e:.6},{m:.6}",
                    o.seed, o.trial, o.role, o.analyte
                );
            }
        }
        out
    }

    pub fn accuracy_csv(&self) -> String {
        let mut out = String::from("seed,correct,total\n");
        for r in &self.runs {
            let _ = writeln!(out, "{},{},{}", r.seed, r.n_correct(), r.outcomes.len());
        }
        out
    }

    /// One row per vector, with its trial's weights.
    pub fn trials_csv(&self) -> String {
        let mut out = String::from(
            "seed,trial,weights,role,analyte,bits,expected_label,measured_label,correct\n",
        );
        for r in &self.runs {
            for o in &r.outcomes {
                let spec = &r.trials[o.trial];
                let role = ROLES.iter().position(|x| *x == o.role).expect("known role");
                let w: Vec<String> = spec.weights.iter().map(|w| format!("{w:.3}")).collect();
                let bits: String = spec.vectors[role]
                    .iter()
                    .map(|&b| if b { '1' } else { '0' })
                    .collect();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{bits},{},{},{}",
                    r.seed,
                    o.trial,
                    w.join(" "),
                    o.role,
                    o.analyte,
                    o.expected_label(),
                    o.measured_label(),
                    o.correct()
                );
            }
        }
        out
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            seeds: Vec<u64>,
            noise_enabled: bool,
            noise_scale: f64,
            vectors_per_seed: usize,
            accuracy: Vec<usize>,
            median_accuracy: f64,
            differential_error: &'a ErrorSummary,
            absolute_error: &'a ErrorSummary,
        }
        serde_json::to_string_pretty(&Summary {
            seeds: self.runs.iter().map(|r| r.seed).collect(),
            noise_enabled: self.noise_enabled,
            noise_scale: self.noise_scale,
            vectors_per_seed: self.n_vectors(),
            accuracy: self.accuracies(),
            median_accuracy: self.median_accuracy(),
            differential_error: &self.differential,
            absolute_error: &self.absolute,
        })
        .expect("summary serializes")
    }

    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let outcomes: Vec<&VectorOutcome> = self.runs.iter().flat_map(|r| &r.outcomes).collect();
        let diff: Vec<f64> = outcomes.iter().map(|o| o.error()).collect();
        let abs: Vec<f64> = outcomes
            .iter()
            .flat_map(|o| {
                [
                    o.measured_pos - o.expected_pos,
                    o.measured_neg - o.expected_neg,
                ]
            })
            .collect();
        let pools: Vec<(f64, f64)> = outcomes
            .iter()
            .flat_map(|o| {
                [
                    (o.expected_pos, o.measured_pos),
                    (o.expected_neg, o.measured_neg),
                ]
            })
            .collect();
        let zs: Vec<(f64, f64)> = outcomes
            .iter()
            .map(|o| (o.expected_z, o.measured_z))
            .collect();
        let h_diff = Histogram::of(&diff, 30, true);
        let h_abs = Histogram::of(&abs, 30, true);
        let files: Vec<(&str, String)> = vec![
            ("validation_results.csv", self.results_csv()),
            ("validation_trials.csv", self.trials_csv()),
            ("validation_pools.csv", self.pools_csv()),
            ("validation_accuracy.csv", self.accuracy_csv()),
            ("validation_error_hist.csv", h_diff.to_csv()),
            ("validation_summary.json", self.summary_json()),
            ("validation_cost.json", self.runs[0].cost.to_json()),
            (
                "validation_pools.svg",
                plot::scatter(
                    &pools,
                    "Pool concentrations",
                    "expected (mg/mL)",
                    "measured (mg/mL)",
                    true,
                ),
            ),
            (
                "validation_differential.svg",
                plot::scatter(
                    &zs,
                    "Differential concentrations",
                    "expected z (mg/mL)",
                    "measured z (mg/mL)",
                    true,
                ),
            ),
            (
                "validation_abs_error_hist.svg",
                plot::histogram(
                    &h_abs,
                    Some((self.absolute.mean, self.absolute.sd)),
                    "Pool concentration error",
                    "error (mg/mL)",
                ),
            ),
            (
                "validation_error_hist.svg",
                plot::histogram(
                    &h_diff,
                    Some((self.differential.mean, self.differential.sd)),
                    "Differential error",
                    "error (mg/mL)",
                ),
            ),
        ];
        for (name, body) in files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// Pooled 3σ of the differential error at noise scale `k`.
pub fn differential_three_sigma(base: &ExperimentConfig, seeds: &[u64], k: f64) -> Result<f64> {
    let mut cfg = base.clone();
    cfg.noise = NoiseSettings {
        enabled: true,
        scale: Some(k),
        ..base.noise.clone()
    };
    cfg.seeds = seeds.to_vec();
    Ok(run_validation(&cfg)?.differential.three_sigma)
}

/// Bisects the noise scale until the pooled 3σ of the differential error
/// hits `target` (mg/mL). Uses the same seeds at every step so the
/// objective is smooth in `k`.
pub fn calibrate_noise_scale(
    base: &ExperimentConfig,
    seeds: &[u64],
    target: f64,
    tol: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    while differential_three_sigma(base, seeds, hi)? < target {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::InvalidConfig(
                "noise scale does not reach the target spread".into(),
            ));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if differential_three_sigma(base, seeds, mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
