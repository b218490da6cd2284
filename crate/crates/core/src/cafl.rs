//! The contribution-aware game: a participant contributing less than the
//! threshold `b_th` is excluded from the trained model.
//!
//! Strategies are `B_k ∈ {0} ∪ [b_th, b_max]`. An equilibrium, when it exists,
//! splits the players in descending `β` order into full contributors, at most
//! one interior (critical) contributor, threshold contributors and excluded
//! players. Players below the critical one only choose between `0` and
//! `b_th`; that restricted game (the partial game) always has a largest
//! equilibrium, computed in linear time by [`solve_partial`].
//!
//! The complete game need not have an equilibrium. [`solve_cafl`] searches
//! for the critical player and, when the global batchsize jumps over the
//! critical player's `β` as its contribution grows, removes the lowest-`β`
//! participant responsible for the jump and starts over.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    EquilibriumProperty, EquilibriumResult, GameInstance, ParticipantType, StrategyProfile,
};
use crate::threshold::total_utility_of;

/// Default bracket width for the search over the critical contribution.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Relative tolerance for the boundary comparisons against `β`.
const TIE_TOL: f64 = 1e-9;

/// Participation barrier `(e^{A·b_th/θ} − 1)² − b_th`: the least amount the
/// others must contribute for a threshold contribution to pay off.
///
/// A participant that does not value the model (`θ = 0`) never participates;
/// its barrier is `+∞`.
pub fn phi_threshold(b_th: f64, theta: f64, unit_cost: f64) -> f64 {
    if theta <= 0.0 {
        return f64::INFINITY;
    }
    let grow = (unit_cost * b_th / theta).exp_m1();
    grow * grow - b_th
}

fn threshold_of(inst: &GameInstance) -> Result<f64> {
    inst.b_th().ok_or_else(|| {
        Error::InvalidArgument("the contribution-aware game needs a threshold b_th".into())
    })
}

fn aware_response(beta: f64, b_max: f64, phi: f64, b_th: f64, b_others: f64) -> f64 {
    let interior = beta - b_others;
    if b_max < interior {
        b_max
    } else if b_th <= interior {
        interior
    } else if b_others >= phi {
        b_th
    } else {
        0.0
    }
}

/// Best response of the player at position `k` to the others' total `b_others`.
pub fn cafl_best_response(inst: &GameInstance, k: usize, b_others: f64) -> Result<f64> {
    let b_th = threshold_of(inst)?;
    let p = &inst.players()[k];
    let phi = phi_threshold(b_th, p.theta(), p.unit_cost());
    Ok(aware_response(p.beta(), p.b_max(), phi, b_th, b_others))
}

/// Number of leading members (in ascending barrier order) that contribute
/// `b_th` in the largest equilibrium of the partial game with external
/// contribution `h`.
///
/// Start with everyone at `b_th` and walk from the highest barrier down,
/// dropping each member whose barrier the others do not cover. Members ahead
/// of position `j` still contribute, so `B_{-j} = j·b_th` at that point.
fn joining_prefix(
    barriers: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator,
    h: f64,
    b_th: f64,
) -> usize {
    let n = barriers.len();
    for (j, phi) in barriers.rev().enumerate().map(|(r, phi)| (n - 1 - r, phi)) {
        if j as f64 * b_th >= phi - h {
            return j + 1;
        }
    }
    0
}

/// The restricted game among players ranked below a critical player.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialGame {
    /// Batchsize supplied from outside the game.
    pub h: f64,
    /// Member ids.
    pub members: Vec<u32>,
    pub b_th: f64,
}

impl PartialGame {
    /// The partial game left below the player at `rank` when it contributes
    /// `b_con` and everyone above it contributes `b_max`.
    pub fn below(inst: &GameInstance, rank: usize, b_con: f64) -> Result<Self> {
        let b_th = threshold_of(inst)?;
        let players = inst.players();
        if rank >= players.len() {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} out of range for {} participants",
                players.len()
            )));
        }
        let cap = players[rank].b_max();
        if !(b_con >= b_th && b_con <= cap) {
            return Err(Error::InvalidArgument(format!(
                "b_con {b_con} outside [{b_th}, {cap}]"
            )));
        }
        let h = players[..rank].iter().map(|p| p.b_max()).sum::<f64>() + b_con;
        Ok(PartialGame {
            h,
            members: players[rank + 1..].iter().map(|p| p.id()).collect(),
            b_th,
        })
    }
}

/// Largest-batchsize equilibrium of a partial game.
///
/// Returns one batchsize per entry of `g.members`, in the same order, each
/// either `0` or `g.b_th`.
pub fn solve_partial(g: &PartialGame, inst: &GameInstance) -> Result<StrategyProfile> {
    let mut order: Vec<(usize, f64)> = Vec::with_capacity(g.members.len());
    for (slot, id) in g.members.iter().enumerate() {
        let pos = inst.position_of(*id).ok_or_else(|| {
            Error::InvalidArgument(format!("partial-game member {id} not in instance"))
        })?;
        let p = &inst.players()[pos];
        order.push((slot, phi_threshold(g.b_th, p.theta(), p.unit_cost())));
    }
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let joined = joining_prefix(order.iter().map(|o| o.1), g.h, g.b_th);
    let mut batch = vec![0.0; g.members.len()];
    for &(slot, _) in &order[..joined] {
        batch[slot] = g.b_th;
    }
    Ok(StrategyProfile::new(batch))
}

/// Global batchsize with the players above `rank` at `b_max`, the player at
/// `rank` at `b_con`, and the partial game below it at its largest equilibrium.
pub fn f_c(inst: &GameInstance, rank: usize, b_con: f64) -> Result<f64> {
    let g = PartialGame::below(inst, rank, b_con)?;
    Ok(g.h + solve_partial(&g, inst)?.global_batchsize())
}

/// What one pass of the critical-player search concluded.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoundOutcome {
    Equilibrium {
        critical: Option<u32>,
        property: EquilibriumProperty,
        b_con: Option<f64>,
    },
    Removed {
        id: u32,
        /// Bracket on the critical contribution where the jump was found.
        bracket: (f64, f64),
        f_left: f64,
        f_right: f64,
        special: Vec<u32>,
        /// Set when the jump had no special participants and the
        /// lowest-`β` contributor was dropped instead.
        fallback: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaflRound {
    pub round: usize,
    /// 0-based rank, among remaining players, of the first player with
    /// `F_c(i, b_max(i)) > β_i`; `None` when no player satisfies it.
    pub search_rank: Option<usize>,
    pub outcome: RoundOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaflSolution {
    pub result: EquilibriumResult,
    pub removed_order: Vec<u32>,
    pub search_epsilon: f64,
    /// Search rank in the original game (before any removal).
    pub first_search_rank: Option<usize>,
    pub rounds: Vec<CaflRound>,
}

impl CaflSolution {
    /// Upper bound on removals, `K − i*` with `i*` the 1-based first search index.
    pub fn removal_bound(&self) -> usize {
        match self.first_search_rank {
            Some(r) => self.result.profile.len() - (r + 1),
            None => 0,
        }
    }
}

/// Candidate critical configuration.
#[derive(Debug, Clone, Copy)]
struct Config {
    /// Critical rank and contribution, or `None` when everyone left plays the
    /// partial game with no external contribution.
    critical: Option<(usize, f64)>,
    /// Number of leading active players that contribute.
    contributors: usize,
    total: f64,
}

struct Work<'a> {
    inst: &'a GameInstance,
    b_th: f64,
    barriers: Vec<f64>,
    active: Vec<usize>,
    prefix: Vec<f64>,
}

impl<'a> Work<'a> {
    fn new(inst: &'a GameInstance, b_th: f64) -> Self {
        let barriers = inst
            .players()
            .iter()
            .map(|p| phi_threshold(b_th, p.theta(), p.unit_cost()))
            .collect();
        let mut w = Work {
            inst,
            b_th,
            barriers,
            active: (0..inst.len()).collect(),
            prefix: Vec::new(),
        };
        w.rebuild();
        w
    }

    fn rebuild(&mut self) {
        self.prefix.clear();
        self.prefix.push(0.0);
        let mut acc = 0.0;
        for &pos in &self.active {
            acc += self.inst.players()[pos].b_max();
            self.prefix.push(acc);
        }
    }

    fn beta(&self, r: usize) -> f64 {
        self.inst.players()[self.active[r]].beta()
    }

    fn b_max(&self, r: usize) -> f64 {
        self.inst.players()[self.active[r]].b_max()
    }

    fn id(&self, r: usize) -> u32 {
        self.inst.players()[self.active[r]].id()
    }

    fn config(&self, critical: Option<(usize, f64)>) -> Config {
        let (h, from) = match critical {
            Some((r, b)) => (self.prefix[r] + b, r + 1),
            None => (0.0, 0),
        };
        let barriers = self.active[from..].iter().map(|&pos| self.barriers[pos]);
        let joined = joining_prefix(barriers, h, self.b_th);
        Config {
            critical,
            contributors: from + joined,
            total: h + joined as f64 * self.b_th,
        }
    }

    fn f_c(&self, r: usize, b: f64) -> f64 {
        self.config(Some((r, b))).total
    }

    /// First rank with `F_c(r, b_max(r)) > β_r`, or `len` when there is none.
    fn search(&self) -> usize {
        let (mut lo, mut hi) = (0, self.active.len());
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.f_c(mid, self.b_max(mid)) > self.beta(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Computes an equilibrium of the contribution-aware game, removing
/// participants until one exists.
///
/// When the critical player's contribution is found by bisection the left
/// end of the final bracket is used, so `B_nash` undershoots `β_c` by at most
/// `epsilon`.
pub fn solve_cafl(inst: &GameInstance, epsilon: f64) -> Result<CaflSolution> {
    let b_th = threshold_of(inst)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    if inst.is_empty() {
        return Err(Error::InvalidArgument("empty population".into()));
    }

    let mut work = Work::new(inst, b_th);
    let mut removed_order = Vec::new();
    let mut rounds = Vec::new();
    let mut first_search_rank = None;

    while !work.active.is_empty() {
        let n = work.active.len();
        let i = work.search();
        let search_rank = (i < n).then_some(i);
        if rounds.is_empty() {
            first_search_rank = search_rank;
        }
        let round = rounds.len();

        let found = if i == n {
            // Everybody contributes b_max and still no β is exceeded.
            let cfg = work.config(Some((n - 1, work.b_max(n - 1))));
            let property = if near(cfg.total, work.beta(n - 1)) {
                EquilibriumProperty::P5
            } else {
                EquilibriumProperty::P3
            };
            Ok((cfg, property))
        } else {
            // Candidate one rank above the search index.
            let left = if i == 0 {
                work.config(None)
            } else {
                work.config(Some((i - 1, work.b_max(i - 1))))
            };
            let next_joins = left.contributors > i;
            let beta_i = work.beta(i);
            let above_ok =
                i == 0 || left.total <= work.beta(i - 1) || near(left.total, work.beta(i - 1));
            if i > 0 && near(left.total, work.beta(i - 1)) {
                Ok((left, EquilibriumProperty::P5))
            } else if above_ok && !next_joins && beta_i - b_th < left.total {
                Ok((left, EquilibriumProperty::P3))
            } else if above_ok && next_joins && (beta_i <= left.total || near(beta_i, left.total)) {
                Ok((left, EquilibriumProperty::P4))
            } else {
                bisect_critical(&work, i, epsilon, left)
            }
        };

        match found {
            Ok((cfg, property)) => {
                rounds.push(CaflRound {
                    round,
                    search_rank,
                    outcome: RoundOutcome::Equilibrium {
                        critical: cfg.critical.map(|(r, _)| work.id(r)),
                        property,
                        b_con: cfg.critical.map(|(_, b)| b),
                    },
                });
                let result = assemble(&work, cfg, property, removed_order.len());
                return Ok(CaflSolution {
                    result,
                    removed_order,
                    search_epsilon: epsilon,
                    first_search_rank,
                    rounds,
                });
            }
            Err(jump) => {
                let special: Vec<u32> = (jump.left.contributors..jump.right.contributors)
                    .map(|r| work.id(r))
                    .collect();
                let fallback = special.is_empty();
                let drop_rank = jump.right.contributors.max(1) - 1;
                let id = work.id(drop_rank);
                rounds.push(CaflRound {
                    round,
                    search_rank,
                    outcome: RoundOutcome::Removed {
                        id,
                        bracket: jump.bracket,
                        f_left: jump.left.total,
                        f_right: jump.right.total,
                        special,
                        fallback,
                    },
                });
                removed_order.push(id);
                work.active.remove(drop_rank);
                work.rebuild();
            }
        }
    }

    // Every participant was removed.
    let cfg = Config {
        critical: None,
        contributors: 0,
        total: 0.0,
    };
    let result = assemble(&work, cfg, EquilibriumProperty::P3, removed_order.len());
    Ok(CaflSolution {
        result,
        removed_order,
        search_epsilon: epsilon,
        first_search_rank,
        rounds,
    })
}

struct Jump {
    bracket: (f64, f64),
    left: Config,
    right: Config,
}

/// Looks for `b_con ∈ [b_th, b_max(i)]` with `F_c(i, b_con) = β_i`.
///
/// `below` is the configuration with the player at rank `i` still inside the
/// partial game; it serves as the left side of the jump when `F_c` already
/// exceeds `β_i` at `b_th`.
fn bisect_critical(
    work: &Work<'_>,
    i: usize,
    epsilon: f64,
    below: Config,
) -> std::result::Result<(Config, EquilibriumProperty), Jump> {
    let beta = work.beta(i);
    let mut lo = work.b_th;
    let mut hi = work.b_max(i);
    let mut left = work.config(Some((i, lo)));
    if left.total > beta && !near(left.total, beta) {
        return Err(Jump {
            bracket: (lo, lo),
            left: below,
            right: left,
        });
    }
    if left.total >= beta {
        return Ok((left, EquilibriumProperty::P5));
    }
    let mut right = work.config(Some((i, hi)));
    while hi - lo > epsilon {
        let mid = 0.5 * (lo + hi);
        let cfg = work.config(Some((i, mid)));
        if cfg.total <= beta {
            lo = mid;
            left = cfg;
        } else {
            hi = mid;
            right = cfg;
        }
    }
    if right.total - left.total <= epsilon {
        Ok((left, EquilibriumProperty::P5))
    } else {
        Err(Jump {
            bracket: (lo, hi),
            left,
            right,
        })
    }
}

fn assemble(
    work: &Work<'_>,
    cfg: Config,
    property: EquilibriumProperty,
    iterations: usize,
) -> EquilibriumResult {
    let inst = work.inst;
    let k = inst.len();
    let mut batch = vec![0.0; k];
    let mut labels = vec![ParticipantType::Removed; k];
    for (r, &pos) in work.active.iter().enumerate() {
        let (b, label) = match cfg.critical {
            Some((c, _)) if r < c => (inst.players()[pos].b_max(), ParticipantType::Type1),
            Some((c, b_con)) if r == c => {
                let label = if property == EquilibriumProperty::P5 {
                    ParticipantType::Type2
                } else {
                    ParticipantType::Type1
                };
                (b_con, label)
            }
            _ if r < cfg.contributors => (work.b_th, ParticipantType::Type3),
            _ => (0.0, ParticipantType::Type4),
        };
        batch[pos] = b;
        labels[pos] = label;
    }
    let profile = StrategyProfile::new(batch);
    let mut removed: Vec<u32> = (0..k)
        .filter(|&pos| labels[pos] == ParticipantType::Removed)
        .map(|pos| inst.players()[pos].id())
        .collect();
    removed.sort_unstable();
    let total_utility = total_utility_of(inst, &profile);
    EquilibriumResult {
        profile,
        critical_index: cfg.critical.map(|(r, _)| work.id(r)),
        type_labels: labels,
        removed,
        iterations,
        total_utility,
        property: Some(property),
    }
}
