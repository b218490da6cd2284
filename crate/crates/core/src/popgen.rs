//! Seeded populations of high- and low-quality participants, and batch
//! experiments over them.
//!
//! Randomness comes from `ChaCha8Rng` seeded with the experiment seed. Each
//! (cell, trial) pair gets its own stream `cell << 32 | trial`, so a trial is
//! reproducible on its own and does not depend on how many trials run.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_baseline, Scheme};
use crate::cafl::DEFAULT_EPSILON;
use crate::cofl::solve_cofl;
use crate::error::{Error, Result};
use crate::model::{GameInstance, Participant, DEFAULT_ALPHA, SCHEMA_VERSION};
use crate::threshold::optimize_threshold_with;

pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.3), stream = cell << 32 | trial";

pub const F_MIN: f64 = 0.3e9;
pub const F_MAX: f64 = 1.5e9;
pub const CYCLES: (f64, f64) = (1.22e6, 2.44e6);

/// Parameter ranges for one participant class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityClass {
    pub theta: (f64, f64),
    pub phi: (f64, f64),
    pub gamma: (f64, f64),
}

pub const HIGH_QUALITY: QualityClass = QualityClass {
    theta: (50.0, 100.0),
    phi: (1.0, 10.0),
    gamma: (10.0, 100.0),
};

pub const LOW_QUALITY: QualityClass = QualityClass {
    theta: (0.0, 10.0),
    phi: (1.0, 20.0),
    gamma: (10.0, 200.0),
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub k: usize,
    pub hq_fraction: f64,
    /// Inclusive range for `b_max`; draws are whole samples.
    pub b_max_range: (f64, f64),
    pub seed: u64,
    pub alpha: f64,
}

impl PopulationSpec {
    pub fn new(k: usize, hq_fraction: f64, seed: u64) -> Self {
        PopulationSpec {
            k,
            hq_fraction,
            b_max_range: (30.0, 150.0),
            seed,
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn high_quality_count(&self) -> usize {
        (self.k as f64 * self.hq_fraction).ceil() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument(
                "population size k must be > 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.hq_fraction) {
            return Err(Error::param("hq_fraction", "must lie in [0, 1]"));
        }
        let (lo, hi) = self.b_max_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::param("b_max_range", "needs finite low <= high"));
        }
        if lo.ceil() > hi.floor() || hi.floor() < 1.0 {
            return Err(Error::param(
                "b_max_range",
                "contains no positive whole number",
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", "must be > 0"));
        }
        Ok(())
    }
}

/// Draws a population on stream 0 of `spec.seed`.
pub fn generate(spec: &PopulationSpec) -> Result<GameInstance> {
    generate_stream(spec, 0)
}

/// Draws a population on the given stream of `spec.seed`.
///
/// The first `⌈k·hq_fraction⌉` participants (ids `1..`) are high quality.
pub fn generate_stream(spec: &PopulationSpec, stream: u64) -> Result<GameInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let hq = spec.high_quality_count();
    let b_lo = spec.b_max_range.0.ceil().max(1.0) as u64;
    let b_hi = spec.b_max_range.1.floor() as u64;

    let participants = (0..spec.k)
        .map(|i| {
            let class = if i < hq { HIGH_QUALITY } else { LOW_QUALITY };
            let p = Participant {
                id: i as u32 + 1,
                theta: draw(&mut rng, class.theta),
                phi: draw(&mut rng, class.phi),
                gamma: draw(&mut rng, class.gamma),
                cycles_per_sample: draw(&mut rng, CYCLES),
                f_min: F_MIN,
                f_max: F_MAX,
                b_max: rng.gen_range(b_lo..=b_hi) as f64,
            };
            assert!(in_range(p.theta, class.theta), "theta out of range");
            assert!(in_range(p.phi, class.phi), "phi out of range");
            assert!(in_range(p.gamma, class.gamma), "gamma out of range");
            assert!(in_range(p.cycles_per_sample, CYCLES), "cycles out of range");
            p
        })
        .collect();
    GameInstance::new(participants, spec.alpha, None)
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.gen_range(lo..=hi)
}

fn in_range(x: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub k: usize,
    pub hq_fraction: f64,
    #[serde(default = "default_b_max_range")]
    pub b_max_range: (f64, f64),
}

fn default_b_max_range() -> (f64, f64) {
    (30.0, 150.0)
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cells: Vec<CellSpec>,
    pub trials: usize,
    pub seed: u64,
    /// Baselines to run besides the two games.
    #[serde(default)]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub out_dir: PathBuf,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = crate::error::load_json(path, &text)?;
        // A relative output directory is taken relative to the config file.
        if cfg.out_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.out_dir = parent.join(&cfg.out_dir);
            }
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::param("cells", "must not be empty"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "must be > 0"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param("epsilon", "must be > 0"));
        }
        if self.cells.len() > u32::MAX as usize || self.trials > u32::MAX as usize {
            return Err(Error::param("cells", "too many cells or trials"));
        }
        for (i, c) in self.cells.iter().enumerate() {
            self.spec(c)
                .validate()
                .map_err(|e| Error::param(format!("cells[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    fn spec(&self, cell: &CellSpec) -> PopulationSpec {
        PopulationSpec {
            k: cell.k,
            hq_fraction: cell.hq_fraction,
            b_max_range: cell.b_max_range,
            seed: self.seed,
            alpha: self.alpha,
        }
    }
}

/// One scheme's outcome on one generated population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub cell: usize,
    pub k: usize,
    pub hq_fraction: f64,
    pub trial: usize,
    pub scheme: String,
    /// Threshold used by the aware game; empty for other schemes.
    pub b_th: Option<u32>,
    pub global_batchsize: f64,
    pub total_utility: f64,
    pub contributors: usize,
    pub removed: usize,
}

/// Averages over the trials of one cell for one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub k: usize,
    pub hq_fraction: f64,
    pub scheme: String,
    pub trials: usize,
    pub mean_global_batchsize: f64,
    pub mean_total_utility: f64,
    pub mean_contributors: f64,
    pub mean_removed: f64,
    /// Mean global batchsize relative to the oblivious game.
    pub batchsize_growth: f64,
    /// Mean total utility relative to the oblivious game.
    pub utility_growth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<TrialRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn summary_for(&self, cell: usize, scheme: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.cell == cell && s.scheme == scheme)
    }

    /// Writes `trials.csv`, `summary.csv` and `metadata.json` into `dir`.
    pub fn write(&self, dir: &Path, config: &ExperimentConfig) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(&dir.join("trials.csv"), &self.rows)?;
        write_csv(&dir.join("summary.csv"), &self.summary)?;
        let meta = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "seed": config.seed,
            "generator": GENERATOR,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
        });
        let path = dir.join("metadata.json");
        let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs every (cell, trial) pair. `jobs` follows
/// [`optimize_threshold_with`]; the report does not depend on it.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentReport> {
    config.validate()?;
    let pairs: Vec<(usize, usize)> = (0..config.cells.len())
        .flat_map(|c| (0..config.trials).map(move |t| (c, t)))
        .collect();
    let run = |&(c, t): &(usize, usize)| run_trial(config, c, t);
    let per_trial: Vec<Vec<TrialRow>> = match jobs {
        Some(1) => pairs.iter().map(run).collect::<Result<_>>()?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| pairs.par_iter().map(run).collect::<Result<_>>())?,
        None => pairs.par_iter().map(run).collect::<Result<_>>()?,
    };
    let rows: Vec<TrialRow> = per_trial.into_iter().flatten().collect();
    let summary = summarize(config, &rows);
    Ok(ExperimentReport { rows, summary })
}

fn run_trial(config: &ExperimentConfig, cell: usize, trial: usize) -> Result<Vec<TrialRow>> {
    let c = &config.cells[cell];
    let stream = ((cell as u64) << 32) | trial as u64;
    let inst = generate_stream(&config.spec(c), stream)?;
    let row = |scheme: &str, b_th, b: f64, tu: f64, n: usize, removed: usize| TrialRow {
        cell,
        k: c.k,
        hq_fraction: c.hq_fraction,
        trial,
        scheme: scheme.to_string(),
        b_th,
        global_batchsize: b,
        total_utility: tu,
        contributors: n,
        removed,
    };

    let mut rows = Vec::with_capacity(2 + config.schemes.len());
    let cofl = solve_cofl(&inst)?.result;
    rows.push(row(
        "cofl",
        None,
        cofl.global_batchsize(),
        cofl.total_utility,
        cofl.contributor_count(),
        0,
    ));
    // Trials already run in parallel; the sweep stays on this thread.
    let sweep = optimize_threshold_with(&inst, config.epsilon, Some(1))?;
    let best = sweep.best();
    rows.push(row(
        "cafl",
        Some(best.b_th),
        best.global_batchsize,
        best.total_utility,
        best.contributors,
        best.removed,
    ));
    for &scheme in &config.schemes {
        let out = run_baseline(scheme, &inst);
        rows.push(row(
            scheme.name(),
            None,
            out.global_batchsize(),
            out.total_utility,
            out.contributor_count(),
            0,
        ));
    }
    Ok(rows)
}

fn summarize(config: &ExperimentConfig, rows: &[TrialRow]) -> Vec<SummaryRow> {
    let mut schemes = vec!["cofl".to_string(), "cafl".to_string()];
    schemes.extend(config.schemes.iter().map(|s| s.name().to_string()));
    schemes.dedup();

    let mut out = Vec::new();
    for (cell, c) in config.cells.iter().enumerate() {
        let mean = |scheme: &str, f: &dyn Fn(&TrialRow) -> f64| {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.cell == cell && r.scheme == scheme)
                .map(f)
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        let base_b = mean("cofl", &|r| r.global_batchsize);
        let base_u = mean("cofl", &|r| r.total_utility);
        for scheme in &schemes {
            let b = mean(scheme, &|r| r.global_batchsize);
            let u = mean(scheme, &|r| r.total_utility);
            out.push(SummaryRow {
                cell,
                k: c.k,
                hq_fraction: c.hq_fraction,
                scheme: scheme.clone(),
                trials: config.trials,
                mean_global_batchsize: b,
                mean_total_utility: u,
                mean_contributors: mean(scheme, &|r| r.contributors as f64),
                mean_removed: mean(scheme, &|r| r.removed as f64),
                batchsize_growth: b / base_b,
                utility_growth: u / base_u,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig4_group_split() {
        let inst = generate(&PopulationSpec::new(20, 0.5, 11)).unwrap();
        let hq = inst.players().iter().filter(|p| p.theta() >= 50.0).count();
        assert_eq!(hq, 10);
        assert_eq!(inst.len(), 20);
    }

    #[test]
    fn all_high_quality() {
        let inst = generate(&PopulationSpec::new(30, 1.0, 3)).unwrap();
        assert!(inst
            .players()
            .iter()
            .all(|p| (50.0..=100.0).contains(&p.theta())));
    }

    #[test]
    fn ceiling_for_odd_splits() {
        assert_eq!(PopulationSpec::new(5, 0.5, 0).high_quality_count(), 3);
        assert_eq!(PopulationSpec::new(20, 0.25, 0).high_quality_count(), 5);
        assert_eq!(PopulationSpec::new(7, 0.0, 0).high_quality_count(), 0);
    }

    #[test]
    fn same_seed_same_instance() {
        let spec = PopulationSpec::new(40, 0.3, 99);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.to_json_string(), b.to_json_string());
        let c = generate_stream(&spec, 1).unwrap();
        assert_ne!(a.to_json_string(), c.to_json_string());
    }

    #[test]
    fn parameters_inside_ranges() {
        let inst = generate(&PopulationSpec::new(200, 0.5, 5)).unwrap();
        for p in inst.players() {
            let q = &p.participant;
            let class = if q.theta >= 50.0 {
                HIGH_QUALITY
            } else {
                LOW_QUALITY
            };
            assert!(in_range(q.phi, class.phi));
            assert!(in_range(q.gamma, class.gamma));
            assert!(in_range(q.cycles_per_sample, CYCLES));
            assert!((30.0..=150.0).contains(&q.b_max) && q.b_max.fract() == 0.0);
            assert_eq!((q.f_min, q.f_max), (F_MIN, F_MAX));
        }
        let betas: Vec<f64> = inst.players().iter().map(|p| p.beta()).collect();
        assert!(betas.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&PopulationSpec::new(0, 0.5, 1)).is_err());
        assert!(generate(&PopulationSpec::new(3, 1.5, 1)).is_err());
        let mut s = PopulationSpec::new(3, 0.5, 1);
        s.b_max_range = (10.2, 10.8);
        assert!(generate(&s).is_err());
    }

    fn small_config(out: PathBuf) -> ExperimentConfig {
        ExperimentConfig {
            cells: vec![
                CellSpec {
                    k: 6,
                    hq_fraction: 0.5,
                    b_max_range: (30.0, 150.0),
                },
                CellSpec {
                    k: 8,
                    hq_fraction: 1.0,
                    b_max_range: (30.0, 150.0),
                },
            ],
            trials: 3,
            seed: 2024,
            schemes: vec![Scheme::Uniform, Scheme::Optimal, Scheme::Independent],
            epsilon: DEFAULT_EPSILON,
            out_dir: out,
            alpha: DEFAULT_ALPHA,
        }
    }

    #[test]
    fn experiment_is_deterministic_and_independent_of_jobs() {
        let cfg = small_config(PathBuf::from("unused"));
        let a = run_experiment(&cfg, Some(1)).unwrap();
        let b = run_experiment(&cfg, Some(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 2 * 3 * 5);
        assert_eq!(a.summary.len(), 2 * 5);
        let cofl = a.summary_for(0, "cofl").unwrap();
        assert_eq!(cofl.batchsize_growth, 1.0);
        assert_eq!(a.summary_for(1, "cafl").unwrap().mean_contributors, 8.0);
    }

    #[test]
    fn trial_does_not_depend_on_trial_count() {
        let mut cfg = small_config(PathBuf::from("unused"));
        let three = run_experiment(&cfg, Some(1)).unwrap();
        cfg.trials = 1;
        let one = run_experiment(&cfg, Some(1)).unwrap();
        for r in &one.rows {
            assert!(three.rows.contains(r));
        }
    }

    #[test]
    fn writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path().to_path_buf());
        let report = run_experiment(&cfg, Some(1)).unwrap();
        report.write(dir.path(), &cfg).unwrap();
        for f in ["trials.csv", "summary.csv", "metadata.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap())
                .unwrap();
        assert_eq!(meta["seed"], 2024);
        assert_eq!(meta["generator"], GENERATOR);
    }
}
