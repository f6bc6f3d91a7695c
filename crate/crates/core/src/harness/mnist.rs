//! Three overlaid 16×16 digit images classified by three one-vs-all
//! chemical perceptrons.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MnistConfig};
use super::digits::preprocess;
use super::idx::{ingest_idx, ingest_labels};
use super::pipeline::{read_pools, registry_with_stock, run_ladder, tags};
use crate::classifier::{threshold, train, ClassLabel, TrainConfig, TrainedClassifier};
use crate::compiler::{check_budget, compile, CostReport, InstructionSequence, PoolWells};
use crate::encoder::{
    emit_write_instructions, format_grid, layout, written_concentration, Dataset,
};
use crate::error::{Error, Result};
use crate::hplc::{Chromatogram, HplcProfile};
use crate::mixture::{AnalyteId, Deck, PlateDims};
use crate::readout::{oracle_z, results_csv, ResultRow};
use crate::rng::sub_seed;
use crate::robot::execute;

pub const IMAGE_SIDE: usize = 16;

const BUNDLED_IMAGES: &str = include_str!("../../fixtures/mnist/images.json");
const BUNDLED_CLASSIFIERS: &str = include_str!("../../fixtures/mnist/classifiers.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestImage {
    pub name: String,
    pub digit: u8,
    #[serde(with = "bit_string")]
    pub bits: Vec<bool>,
}

/// Bits as a string of `0`/`1`, one row of the image per line.
mod bit_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<String> = bits
            .chunks(super::IMAGE_SIDE)
            .map(|r| r.iter().map(|&b| if b { '1' } else { '0' }).collect())
            .collect();
        s.collect_seq(rows)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let rows: Vec<String> = Vec::deserialize(d)?;
        rows.iter()
            .flat_map(|r| r.chars())
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(serde::de::Error::custom(format!("bad pixel {other:?}"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnistFixtures {
    pub images: Vec<TestImage>,
    pub classifiers: Vec<TrainedClassifier>,
}

impl MnistFixtures {
    pub fn parse(images: &str, classifiers: &str) -> Result<Self> {
        let f = Self {
            images: serde_json::from_str(images)?,
            classifiers: serde_json::from_str(classifiers)?,
        };
        if f.images.is_empty() || f.classifiers.is_empty() {
            return Err(Error::MissingFixtures("fixture files are empty".into()));
        }
        let n = IMAGE_SIDE * IMAGE_SIDE;
        if let Some(bad) = f.images.iter().map(|i| i.bits.len()).find(|&l| l != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                got: bad,
            });
        }
        if let Some(bad) = f
            .classifiers
            .iter()
            .map(TrainedClassifier::len)
            .find(|&l| l != n)
        {
            return Err(Error::LengthMismatch {
                expected: n,
                got: bad,
            });
        }
        Ok(f)
    }

    pub fn bundled() -> Result<Self> {
        Self::parse(BUNDLED_IMAGES, BUNDLED_CLASSIFIERS)
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p)
                .map_err(|e| Error::MissingFixtures(format!("{}: {e}", p.display())))
        };
        Self::parse(&read("images.json")?, &read("classifiers.json")?)
    }

    pub fn images_json(&self) -> String {
        serde_json::to_string_pretty(&self.images).expect("images serialize")
    }

    pub fn classifiers_json(&self) -> String {
        serde_json::to_string_pretty(&self.classifiers).expect("classifiers serialize")
    }

    /// Class label each classifier should give each image.
    pub fn expected_table(&self) -> Vec<Vec<ClassLabel>> {
        self.classifiers
            .iter()
            .map(|c| {
                self.images
                    .iter()
                    .map(|i| {
                        if c.foreground_label == i.digit.to_string() {
                            ClassLabel::Match
                        } else {
                            ClassLabel::Mismatch
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// One-vs-all perceptrons, bias-free, trained on `per_class` foreground
/// and `per_class` background images taken in order.
pub fn train_one_vs_all(
    images: &[(Vec<bool>, u8)],
    classes: &[u8],
    per_class: usize,
    seed: u64,
) -> Result<Vec<TrainedClassifier>> {
    classes
        .iter()
        .map(|&c| {
            let fg = images.iter().filter(|(_, d)| *d == c).take(per_class);
            let bg = images.iter().filter(|(_, d)| *d != c).take(per_class);
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (x, d) in fg.chain(bg) {
                xs.push(x.clone());
                ys.push(if *d == c {
                    ClassLabel::Match
                } else {
                    ClassLabel::Mismatch
                });
            }
            if xs.len() < 2 * per_class {
                return Err(Error::MissingFixtures(format!(
                    "not enough training images for class {c}"
                )));
            }
            let cfg = TrainConfig {
                seed: sub_seed(seed, &[c as u64]),
                fit_bias: false,
                ..TrainConfig::default()
            };
            Ok(train(&xs, &ys, &cfg, &c.to_string())?.classifier)
        })
        .collect()
}

/// Trains on real IDX files and takes the first two `classes[0]` and first
/// `classes[1]` images after the training portion that every classifier
/// labels correctly.
pub fn fixtures_from_idx(
    images: &Path,
    labels: &Path,
    cfg: &MnistConfig,
    seed: u64,
) -> Result<MnistFixtures> {
    let set = ingest_idx(images)?;
    let labels = ingest_labels(labels)?;
    let data: Vec<(Vec<bool>, u8)> = set
        .pixels
        .iter()
        .zip(&labels)
        .map(|(p, &l)| (preprocess(p, set.rows, set.cols), l))
        .collect();
    let classifiers = train_one_vs_all(&data, &cfg.classes, cfg.train_per_class, seed)?;
    let skip = (2 * cfg.train_per_class * cfg.classes.len()).min(data.len());
    let wanted = [
        cfg.classes[0],
        cfg.classes[0],
        *cfg.classes.get(1).unwrap_or(&cfg.classes[0]),
    ];
    let mut images = Vec::new();
    let mut used = std::collections::BTreeSet::new();
    for want in wanted {
        let found = data.iter().enumerate().skip(skip).find(|(i, (x, d))| {
            *d == want
                && !used.contains(i)
                && classifiers.iter().all(|c| {
                    let truth = c.foreground_label == d.to_string();
                    c.classify(x)
                        .map(|l| (l == ClassLabel::Match) == truth)
                        .unwrap_or(false)
                })
        });
        let (i, (x, d)) = found.ok_or_else(|| {
            Error::MissingFixtures(format!("no usable test image of digit {want}"))
        })?;
        used.insert(i);
        images.push(TestImage {
            name: format!("img{}", images.len() + 1),
            digit: *d,
            bits: x.clone(),
        });
    }
    Ok(MnistFixtures {
        images,
        classifiers,
    })
}

pub fn load_fixtures(cfg: &MnistConfig, seed: u64) -> Result<MnistFixtures> {
    match (&cfg.idx_images, &cfg.idx_labels, &cfg.fixtures_dir) {
        (Some(i), Some(l), _) => fixtures_from_idx(i, l, cfg, seed),
        (_, _, Some(dir)) => MnistFixtures::load_dir(dir),
        _ => MnistFixtures::bundled(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub classifier: String,
    pub image: String,
    pub analyte: AnalyteId,
    pub expected_z: f64,
    pub measured_z: f64,
}

impl Cell {
    pub fn correct(&self) -> bool {
        threshold(self.expected_z) == threshold(self.measured_z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnistRun {
    pub seed: u64,
    /// Row-major: classifier, then image.
    pub cells: Vec<Cell>,
    pub chromatograms: Vec<(String, Chromatogram)>,
}

impl MnistRun {
    pub fn n_correct(&self) -> usize {
        self.cells.iter().filter(|c| c.correct()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnistReport {
    pub fixtures: MnistFixtures,
    pub runs: Vec<MnistRun>,
    pub write_cost: CostReport,
    pub total_cost: CostReport,
    pub pool_volumes_ul: Vec<f64>,
}

struct Programs {
    writes: InstructionSequence,
    passes: Vec<InstructionSequence>,
}

fn build_programs(cfg: &ExperimentConfig, fx: &MnistFixtures) -> Result<Programs> {
    let n = IMAGE_SIDE * IMAGE_SIDE;
    let mut plan = layout(n, PlateDims::WELLS_384)?.with_write_volume(cfg.write_volume_ul);
    if fx.classifiers.iter().any(|c| c.bias != 0.0) {
        plan = plan.with_bias_well()?;
    }
    let datasets: Vec<Dataset> = fx
        .images
        .iter()
        .enumerate()
        .map(|(k, img)| Dataset::new(AnalyteId(k as u16 + 1), img.bits.clone()))
        .collect();
    let writes = emit_write_instructions(&datasets, &plan)?;
    let passes = fx
        .classifiers
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let pools = PoolWells::nth(j, PlateDims::WELLS_96).ok_or_else(|| {
                Error::InvalidConfig("too many classifiers for the output plate".into())
            })?;
            compile(c, &plan, pools, &cfg.compile)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Programs { writes, passes })
}

fn run_seed(
    cfg: &ExperimentConfig,
    fx: &MnistFixtures,
    progs: &Programs,
    deck0: &Deck,
    seed: u64,
) -> Result<MnistRun> {
    let profile = HplcProfile::phenols();
    let ids: Vec<AnalyteId> = (1..=fx.images.len() as u16).map(AnalyteId).collect();
    let cal = run_ladder(&ids, &profile, &cfg.ladder, &cfg.noise, seed)?;
    let program = progs
        .passes
        .iter()
        .fold(progs.writes.clone(), |acc, p| acc.then(p));
    let (deck, _) = execute(
        &program,
        deck0,
        &cfg.noise.robot(),
        sub_seed(seed, &[tags::ROBOT]),
    )?;
    let c_w = written_concentration(cfg.stock_mg_per_ml, fx.images.len());
    let mut cells = Vec::new();
    let mut chromatograms = Vec::new();
    for (j, (cls, pass)) in fx.classifiers.iter().zip(&progs.passes).enumerate() {
        let pools = pass.meta.pools.expect("compiled pass records its pools");
        let v_p = pass
            .meta
            .pool_volume_ul
            .expect("compiled pass records its pool volume");
        let read = read_pools(
            &deck,
            pools,
            v_p,
            &profile,
            &cal.curve,
            &cfg.noise.hplc(),
            sub_seed(seed, &[tags::HPLC, j as u64]),
        )?;
        for (k, img) in fx.images.iter().enumerate() {
            let a = AnalyteId(k as u16 + 1);
            let dot = cls.predict(&img.bits)?;
            cells.push(Cell {
                classifier: cls.foreground_label.clone(),
                image: img.name.clone(),
                analyte: a,
                expected_z: oracle_z(cfg.compile.v_o_ul, v_p, c_w, dot),
                measured_z: read.result.z(a).ok_or(Error::UnknownAnalyte(a))?,
            });
        }
        let [pos, neg] = read.chromatograms;
        chromatograms.push((format!("cls{}_positive", cls.foreground_label), pos));
        chromatograms.push((format!("cls{}_negative", cls.foreground_label), neg));
    }
    Ok(MnistRun {
        seed,
        cells,
        chromatograms,
    })
}

pub fn run_mnist(cfg: &ExperimentConfig) -> Result<MnistReport> {
    cfg.validate()?;
    let fx = load_fixtures(&cfg.mnist, cfg.seeds[0])?;
    if fx.images.len() > 3 {
        return Err(Error::InvalidConfig(
            "at most three images can be overlaid".into(),
        ));
    }
    let progs = build_programs(cfg, &fx)?;
    let deck0 = Deck::standard(registry_with_stock(cfg.stock_mg_per_ml)?);
    let write_cost = check_budget(&progs.writes, &deck0)?;
    let program = progs
        .passes
        .iter()
        .fold(progs.writes.clone(), |acc, p| acc.then(p));
    let total_cost = check_budget(&program, &deck0)?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, &fx, &progs, &deck0, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(MnistReport {
        pool_volumes_ul: progs
            .passes
            .iter()
            .filter_map(|p| p.meta.pool_volume_ul)
            .collect(),
        fixtures: fx,
        runs,
        write_cost,
        total_cost,
    })
}

impl MnistReport {
    pub fn n_cells(&self) -> usize {
        self.fixtures.classifiers.len() * self.fixtures.images.len()
    }

    /// Fraction of runs reporting Match for each cell.
    pub fn match_fraction(&self) -> Vec<f64> {
        (0..self.n_cells())
            .map(|i| {
                let m = self
                    .runs
                    .iter()
                    .filter(|r| r.cells[i].measured_z > 0.0)
                    .count();
                m as f64 / self.runs.len() as f64
            })
            .collect()
    }

    /// Majority label per cell; ties count as mismatch.
    pub fn majority(&self) -> Vec<ClassLabel> {
        self.match_fraction()
            .into_iter()
            .map(|f| {
                if f > 0.5 {
                    ClassLabel::Match
                } else {
                    ClassLabel::Mismatch
                }
            })
            .collect()
    }

    pub fn results_csv(&self) -> String {
        let rows: Vec<ResultRow> = self
            .runs
            .iter()
            .flat_map(|r| {
                r.cells.iter().map(move |c| {
                    ResultRow::new(
                        format!("s{}-cls{}-{}", r.seed, c.classifier, c.image),
                        c.analyte,
                        c.expected_z,
                        c.measured_z,
                    )
                })
            })
            .collect();
        results_csv(&rows)
    }

    /// The match table: one row per classifier, one column per image.
    pub fn table_csv(&self) -> String {
        let names: Vec<&str> = self
            .fixtures
            .images
            .iter()
            .map(|i| i.name.as_str())
            .collect();
        let mut out = format!("classifier,{}\n", names.join(","));
        let maj = self.majority();
        let frac = self.match_fraction();
        let n_img = names.len();
        for (j, c) in self.fixtures.classifiers.iter().enumerate() {
            let cells: Vec<String> = (0..n_img)
                .map(|k| format!("{} ({:.2})", maj[j * n_img + k], frac[j * n_img + k]))
                .collect();
            let _ = writeln!(out, "{},{}", c.foreground_label, cells.join(","));
        }
        out
    }

    pub fn cost_json(&self) -> String {
        #[derive(Serialize)]
        struct Cost<'a> {
            write_transfers: usize,
            pool_volumes_ul: &'a [f64],
            write: &'a CostReport,
            total: &'a CostReport,
        }
        serde_json::to_string_pretty(&Cost {
            write_transfers: self.write_cost.n_transfers,
            pool_volumes_ul: &self.pool_volumes_ul,
            write: &self.write_cost,
            total: &self.total_cost,
        })
        .expect("cost serializes")
    }

    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("mnist_results.csv"), self.results_csv())?;
        std::fs::write(dir.join("mnist_table.csv"), self.table_csv())?;
        std::fs::write(dir.join("mnist_cost.json"), self.cost_json())?;
        let mut accuracy = String::from("seed,correct,total\n");
        for r in &self.runs {
            let _ = writeln!(accuracy, "{},{},{}", r.seed, r.n_correct(), r.cells.len());
        }
        std::fs::write(dir.join("mnist_accuracy.csv"), accuracy)?;
        for c in &self.fixtures.classifiers {
            std::fs::write(
                dir.join(format!("mnist_weights_{}.csv", c.foreground_label)),
                c.weight_grid_csv(IMAGE_SIDE),
            )?;
        }
        for img in &self.fixtures.images {
            std::fs::write(
                dir.join(format!("mnist_{}.txt", img.name)),
                format_grid(&img.bits, IMAGE_SIDE),
            )?;
        }
        if let Some(first) = self.runs.first() {
            for (name, chrom) in &first.chromatograms {
                std::fs::write(dir.join(format!("chromatogram_{name}.csv")), chrom.to_csv())?;
                std::fs::write(
                    dir.join(format!("chromatogram_{name}.svg")),
                    chrom.to_svg(name),
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_fixtures_load() {
        let fx = MnistFixtures::bundled().unwrap();
        assert_eq!(fx.images.len(), 3);
        assert_eq!(fx.classifiers.len(), 3);
        let digits: Vec<u8> = fx.images.iter().map(|i| i.digit).collect();
        assert_eq!(digits, vec![0, 0, 1]);
        for c in &fx.classifiers {
            assert!(c.is_normalized());
            assert_eq!(c.bias, 0.0);
        }
        let back = MnistFixtures::parse(&fx.images_json(), &fx.classifiers_json()).unwrap();
        assert_eq!(back, fx);
    }

    #[test]
    fn missing_fixture_dir() {
        let dir = tempfile::tempdir().unwrap();
        let err = MnistFixtures::load_dir(&dir.path().join("nope")).unwrap_err();
        assert_eq!(err.kind(), "MissingFixtures");
        assert_eq!(
            MnistFixtures::parse("[]", "[]").unwrap_err().kind(),
            "MissingFixtures"
        );
    }

    #[test]
    fn electronic_table_matches_expectation() {
        let fx = MnistFixtures::bundled().unwrap();
        let expected = fx.expected_table();
        for (c, row) in fx.classifiers.iter().zip(&expected) {
            for (img, want) in fx.images.iter().zip(row) {
                assert_eq!(c.classify(&img.bits).unwrap(), *want);
            }
        }
    }
}
