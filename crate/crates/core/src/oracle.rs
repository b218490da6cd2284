//! Brute-force checks that do not rely on the equilibrium structure used by
//! the solvers: best-response dynamics, grid deviation checks and exhaustive
//! enumeration of small games.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cafl::cafl_best_response;
use crate::cofl::cofl_best_response;
use crate::error::{Error, Result};
use crate::model::{shared_utility, utility, GameInstance, StrategyProfile};

/// Largest per-participant change that still counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-8;
pub const MAX_EXHAUSTIVE_PLAYERS: usize = 4;
pub const MAX_EXHAUSTIVE_GRID: usize = 200;

/// Order in which participants update within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    #[default]
    AscendingId,
    /// A fresh permutation every round, drawn from the given seed.
    Shuffled(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub profile: StrategyProfile,
    pub converged: bool,
    /// Rounds played, including the one that detected convergence.
    pub rounds: usize,
}

/// Sequential best responses until no participant moves by more than
/// [`CONVERGENCE_TOL`] in a round, or `max_rounds` rounds have been played.
///
/// Uses the aware best response when the instance carries a threshold. In
/// that game the dynamics may cycle; this is reported through `converged`
/// rather than as an error.
pub fn best_response_dynamics(
    inst: &GameInstance,
    start: &StrategyProfile,
    max_rounds: usize,
) -> Result<Dynamics> {
    best_response_dynamics_with(inst, start, max_rounds, SweepOrder::AscendingId)
}

pub fn best_response_dynamics_with(
    inst: &GameInstance,
    start: &StrategyProfile,
    max_rounds: usize,
    order: SweepOrder,
) -> Result<Dynamics> {
    start.validate_for(inst)?;
    let k = inst.len();
    let mut b = start.batchsizes().to_vec();

    let mut sweep: Vec<usize> = (0..k).collect();
    sweep.sort_by_key(|&pos| inst.players()[pos].id());
    let mut rng = match order {
        SweepOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        SweepOrder::AscendingId => None,
    };

    for round in 1..=max_rounds {
        if let Some(rng) = rng.as_mut() {
            sweep.shuffle(rng);
        }
        let mut change: f64 = 0.0;
        for &pos in &sweep {
            // Recompute rather than subtract so rounding does not accumulate.
            let others: f64 = b
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != pos)
                .map(|(_, x)| x)
                .sum();
            let next = match inst.b_th() {
                Some(_) => cafl_best_response(inst, pos, others)?,
                None => cofl_best_response(inst, pos, others),
            };
            change = change.max((next - b[pos]).abs());
            b[pos] = next;
        }
        if change <= CONVERGENCE_TOL {
            return Ok(Dynamics {
                profile: StrategyProfile::new(b),
                converged: true,
                rounds: round,
            });
        }
    }
    Ok(Dynamics {
        profile: StrategyProfile::new(b),
        converged: false,
        rounds: max_rounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantCheck {
    pub id: u32,
    pub utility: f64,
    /// Best grid deviation minus current utility; never negative.
    pub gain: f64,
    pub best_deviation: f64,
    /// Largest gain tolerated for this participant.
    pub allowed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeReport {
    pub participants: Vec<ParticipantCheck>,
    pub max_gain: f64,
    pub passed: bool,
}

impl NeReport {
    /// Participants whose gain exceeds their allowance.
    pub fn violations(&self) -> impl Iterator<Item = &ParticipantCheck> {
        self.participants.iter().filter(|c| c.gain > c.allowed)
    }
}

/// Checks every unilateral deviation to `{0}` and a uniform grid of
/// `grid_points` values on `[lower, b_max]` (`lower` is the threshold when
/// there is one, else 0).
///
/// The check passes when each gain is at most `margin · max(1, |U_k|)`, so
/// `margin` is relative to the participant's utility scale.
pub fn verify_ne(
    inst: &GameInstance,
    profile: &StrategyProfile,
    grid_points: usize,
    margin: f64,
) -> Result<NeReport> {
    profile.validate_for(inst)?;
    if grid_points < 2 {
        return Err(Error::InvalidArgument("grid_points must be >= 2".into()));
    }
    let lower = inst.b_th().unwrap_or(0.0);
    let mut participants = Vec::with_capacity(inst.len());
    for (k, p) in inst.players().iter().enumerate() {
        let current = utility(inst, k, profile);
        let others = profile.others(k);
        let at = |b: f64| deviation_utility(inst, k, others, b);
        let (mut best, mut best_value) = (0.0, at(0.0));
        let span = p.b_max() - lower;
        for i in 0..grid_points {
            let b = lower + span * i as f64 / (grid_points - 1) as f64;
            let v = at(b);
            if v > best_value {
                best = b;
                best_value = v;
            }
        }
        participants.push(ParticipantCheck {
            id: p.id(),
            utility: current,
            gain: (best_value - current).max(0.0),
            best_deviation: best,
            allowed: margin * current.abs().max(1.0),
        });
    }
    let max_gain = participants.iter().map(|c| c.gain).fold(0.0, f64::max);
    let passed = participants.iter().all(|c| c.gain <= c.allowed);
    Ok(NeReport {
        participants,
        max_gain,
        passed,
    })
}

/// `U_k` when the others supply `others` and `k` plays `b`.
fn deviation_utility(inst: &GameInstance, k: usize, others: f64, b: f64) -> f64 {
    let p = &inst.players()[k];
    match inst.b_th() {
        Some(_) if b == 0.0 => 0.0,
        Some(t) if b < t => -p.unit_cost() * b,
        _ => shared_utility(p.theta(), p.unit_cost(), others + b, b),
    }
}

/// Grid profiles surviving the exhaustive check, grouped into clusters of
/// neighbouring grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveReport {
    /// Strategy values per participant, in instance order.
    pub grids: Vec<Vec<f64>>,
    /// Grid indices of each surviving profile.
    pub indices: Vec<Vec<usize>>,
    pub profiles: Vec<StrategyProfile>,
    /// Positions into `profiles`, one entry per connected cluster.
    pub clusters: Vec<Vec<usize>>,
}

impl ExhaustiveReport {
    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Grid spacing of participant `k` (the gap between consecutive values on
    /// its contribution interval).
    pub fn spacing(&self, k: usize) -> f64 {
        let g = &self.grids[k];
        g[g.len() - 1] - g[g.len() - 2]
    }
}

/// Enumerates every grid profile and keeps those where no participant gains
/// more than its slack by a unilateral grid deviation.
///
/// Each participant's grid has `grid_points` values on `[lower, b_max]`, with
/// `0` prepended when a threshold puts `lower` above zero. An exact
/// equilibrium lies within half a cell of some grid profile in every
/// coordinate, so the total there is off by at most `K·h/2` (`h` the widest
/// spacing). At an equilibrium the marginal utility `θ_k·g'(B) − A_k` is zero
/// (or has the sign that pins a bound), with `g(B) = ln(1+√B)`. Over the cell
/// it therefore moves by at most `L_k·K·h/2` where
/// `L_k = θ_k·|g''(B_lo)|` and `B_lo = max(B − K·h/2, h)`, since `|g''|`
/// is decreasing. The best response moves by at most `K·h/2` as well, so the
/// deviation gain is at most `L_k·(K·h)²/4`. Twice that is used:
///
/// ```text
/// slack_k = θ_k·|g''(B_lo)|·(K·h)²/2
/// g''(B)  = −(1+2√B) / (4·B^{3/2}·(1+√B)²)
/// ```
///
/// Next to `B = 0`, where `g''` is unbounded, the floor on `B_lo` makes this
/// an estimate rather than a bound. The slack is second order in `h`. In the
/// aware game a profile next to a participation barrier has a first-order
/// gain, which is what makes non-existence visible at grid scale.
pub fn exhaustive_ne(inst: &GameInstance, grid_points: usize) -> Result<ExhaustiveReport> {
    let k = inst.len();
    if k == 0 || k > MAX_EXHAUSTIVE_PLAYERS {
        return Err(Error::InvalidArgument(format!(
            "exhaustive search supports 1..={MAX_EXHAUSTIVE_PLAYERS} participants, got {k}"
        )));
    }
    if !(2..=MAX_EXHAUSTIVE_GRID).contains(&grid_points) {
        return Err(Error::InvalidArgument(format!(
            "grid_points must be in 2..={MAX_EXHAUSTIVE_GRID}, got {grid_points}"
        )));
    }
    let lower = inst.b_th().unwrap_or(0.0);
    let grids: Vec<Vec<f64>> = inst
        .players()
        .iter()
        .map(|p| {
            let mut g = Vec::with_capacity(grid_points + 1);
            if lower > 0.0 {
                g.push(0.0);
            }
            let span = p.b_max() - lower;
            g.extend((0..grid_points).map(|i| lower + span * i as f64 / (grid_points - 1) as f64));
            g
        })
        .collect();
    let h = inst
        .players()
        .iter()
        .map(|p| (p.b_max() - lower) / (grid_points - 1) as f64)
        .fold(0.0, f64::max);
    let offset = usize::from(lower > 0.0);

    let sizes: Vec<usize> = grids.iter().map(Vec::len).collect();
    let last = k - 1;
    // Combinations of everyone but the last participant, flattened.
    let outer: usize = sizes[..last].iter().product();

    let survivors: Vec<Vec<usize>> = (0..outer)
        .into_par_iter()
        .flat_map_iter(|flat| {
            let mut idx = vec![0; k];
            let mut rest = flat;
            for d in (0..last).rev() {
                idx[d] = rest % sizes[d];
                rest /= sizes[d];
            }
            let head: f64 = (0..last).map(|d| grids[d][idx[d]]).sum();
            let best_last = best_on_grid(inst, last, head, &grids[last], offset);
            let mut found = Vec::new();
            for j in 0..sizes[last] {
                idx[last] = j;
                let b: Vec<f64> = (0..k).map(|d| grids[d][idx[d]]).collect();
                let total: f64 = b.iter().sum();
                let ok = (0..k).rev().all(|d| {
                    let others = total - b[d];
                    let best = if d == last {
                        best_last
                    } else {
                        best_on_grid(inst, d, others, &grids[d], offset)
                    };
                    let current = deviation_utility(inst, d, others, b[d]);
                    best - current <= slack(inst.players()[d].theta(), total, k, h)
                });
                if ok {
                    found.push(idx.clone());
                }
            }
            found
        })
        .collect();

    let profiles = survivors
        .iter()
        .map(|idx| StrategyProfile::new((0..k).map(|d| grids[d][idx[d]]).collect()))
        .collect();
    let clusters = clusters(&survivors);
    Ok(ExhaustiveReport {
        grids,
        indices: survivors,
        profiles,
        clusters,
    })
}

/// Best utility over `grid`, which is `[0]` followed by (when `offset` is 1)
/// a grid on the contribution interval where utility is concave.
fn best_on_grid(inst: &GameInstance, k: usize, others: f64, grid: &[f64], offset: usize) -> f64 {
    let at = |i: usize| deviation_utility(inst, k, others, grid[i]);
    let (mut lo, mut hi) = (offset, grid.len() - 1);
    while hi - lo > 2 {
        let m1 = lo + (hi - lo) / 3;
        let m2 = hi - (hi - lo) / 3;
        if at(m1) < at(m2) {
            lo = m1 + 1;
        } else {
            hi = m2;
        }
    }
    let mut best = (lo..=hi).map(at).fold(f64::NEG_INFINITY, f64::max);
    if offset == 1 {
        best = best.max(at(0));
    }
    best
}

fn slack(theta: f64, total: f64, k: usize, h: f64) -> f64 {
    if theta == 0.0 || h == 0.0 {
        return 0.0;
    }
    let kh = k as f64 * h;
    let b = (total - kh / 2.0).max(h);
    let s = b.sqrt();
    let g2 = (1.0 + 2.0 * s) / (4.0 * b * s * (1.0 + s) * (1.0 + s));
    0.5 * theta * g2 * kh * kh
}

/// Connected components under Chebyshev distance 1 in index space.
fn clusters(points: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for a in 0..n {
        for b in a + 1..n {
            let adjacent = points[a]
                .iter()
                .zip(&points[b])
                .all(|(&x, &y)| x.abs_diff(y) <= 1);
            if adjacent {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}
