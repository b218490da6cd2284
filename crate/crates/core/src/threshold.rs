//! Total utility and the exhaustive search for the best integer threshold.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::cafl::solve_cafl;
use crate::error::{Error, Result};
use crate::model::{shared_utility, EquilibriumResult, GameInstance, StrategyProfile};

/// Sum of `θ_k·ln(1+√B) − A_k·B_k` over the participants with `B_k > 0`.
pub fn total_utility(result: &EquilibriumResult, inst: &GameInstance) -> f64 {
    total_utility_of(inst, &result.profile)
}

pub(crate) fn total_utility_of(inst: &GameInstance, profile: &StrategyProfile) -> f64 {
    let total = profile.global_batchsize();
    inst.players()
        .iter()
        .zip(profile.batchsizes())
        .filter(|(_, &b)| b > 0.0)
        .map(|(p, &b)| shared_utility(p.theta(), p.unit_cost(), total, b))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub b_th: u32,
    pub total_utility: f64,
    pub global_batchsize: f64,
    pub contributors: usize,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    /// One entry per threshold `1..=floor(min b_max)`, ascending.
    pub entries: Vec<SweepEntry>,
    pub best_b_th: u32,
}

impl ThresholdSweep {
    pub fn best(&self) -> &SweepEntry {
        &self.entries[self.best_b_th as usize - 1]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for e in &self.entries {
            w.serialize(e).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Solves the aware game for every integer threshold and keeps the one with
/// the largest total utility (the smallest threshold on ties).
pub fn optimize_threshold(inst: &GameInstance, epsilon: f64) -> Result<ThresholdSweep> {
    optimize_threshold_with(inst, epsilon, None)
}

/// As [`optimize_threshold`] with an explicit worker count. `Some(1)` runs on
/// the calling thread; `None` uses the global pool. The result does not
/// depend on the worker count.
pub fn optimize_threshold_with(
    inst: &GameInstance,
    epsilon: f64,
    jobs: Option<usize>,
) -> Result<ThresholdSweep> {
    let cap = inst.threshold_cap();
    if !(cap >= 1.0) || !cap.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "threshold sweep needs min b_max >= 1, got {cap}"
        )));
    }
    let top = cap.floor() as u32;
    let base = inst.without_threshold();
    let solve = |t: u32| -> Result<SweepEntry> {
        let sol = solve_cafl(&base.with_threshold(t as f64)?, epsilon)?;
        Ok(SweepEntry {
            b_th: t,
            total_utility: sol.result.total_utility,
            global_batchsize: sol.result.global_batchsize(),
            contributors: sol.result.contributor_count(),
            removed: sol.result.removed.len(),
        })
    };
    let entries: Vec<SweepEntry> = match jobs {
        Some(1) => (1..=top).map(solve).collect::<Result<_>>()?,
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| (1..=top).into_par_iter().map(solve).collect::<Result<_>>())?
        }
        None => (1..=top)
            .into_par_iter()
            .map(solve)
            .collect::<Result<_>>()?,
    };

    let mut best = 0;
    for (i, e) in entries.iter().enumerate() {
        if e.total_utility > entries[best].total_utility {
            best = i;
        }
    }
    Ok(ThresholdSweep {
        best_b_th: entries[best].b_th,
        entries,
    })
}
