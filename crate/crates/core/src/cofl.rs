//! The contribution-oblivious game: every participant receives the model
//! whatever it contributes.
//!
//! At equilibrium the players split, in descending `β` order, into a block
//! contributing `b_max`, at most one interior contributor and a block of
//! free-riders. The boundary player (the critical participant) is found by a
//! binary search over the cumulative-capacity function [`f_o`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    EquilibriumProperty, EquilibriumResult, GameInstance, ParticipantType, StrategyProfile,
};
use crate::threshold::total_utility_of;

/// Absolute tolerance used to recognise an interior critical player.
const INTERIOR_TOL: f64 = 1e-9;

/// `clamp(β_k − B_{−k}, 0, b_max)`.
pub fn cofl_best_response(inst: &GameInstance, k: usize, b_others: f64) -> f64 {
    let p = &inst.players()[k];
    (p.beta() - b_others).clamp(0.0, p.b_max())
}

/// Global batchsize when every player ranked above `rank` contributes `b_max`,
/// the player at `rank` contributes `b_con`, and the rest contribute nothing.
///
/// `rank` is the 0-based position in descending-`β` order.
pub fn f_o(inst: &GameInstance, rank: usize, b_con: f64) -> Result<f64> {
    let players = inst.players();
    if rank >= players.len() {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} out of range for {} participants",
            players.len()
        )));
    }
    let cap = players[rank].b_max();
    if !(0.0..=cap).contains(&b_con) {
        return Err(Error::InvalidArgument(format!(
            "b_con {b_con} outside [0, {cap}]"
        )));
    }
    Ok(players[..rank].iter().map(|p| p.b_max()).sum::<f64>() + b_con)
}

/// One evaluation of the search predicate `F_o(i, b_max(i)) > β_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchProbe {
    pub rank: usize,
    pub id: u32,
    pub f_value: f64,
    pub beta: f64,
    pub exceeds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoflSolution {
    pub result: EquilibriumResult,
    /// `F_o` evaluated at the critical player and its equilibrium batchsize.
    pub f_o_at_critical: f64,
    /// Binary-search path, in probe order.
    pub trace: Vec<SearchProbe>,
}

/// Computes the unique Nash equilibrium of the contribution-oblivious game.
pub fn solve_cofl(inst: &GameInstance) -> Result<CoflSolution> {
    if inst.is_empty() {
        return Err(Error::InvalidArgument("empty population".into()));
    }
    if inst.b_th().is_some() {
        return Err(Error::InvalidArgument(
            "instance carries a threshold; solve the oblivious game on `without_threshold()`"
                .into(),
        ));
    }
    let players = inst.players();
    let k = players.len();

    // prefix[i] = Σ_{j<i} b_max(j)
    let mut prefix = Vec::with_capacity(k + 1);
    prefix.push(0.0);
    for p in players {
        prefix.push(prefix.last().unwrap() + p.b_max());
    }
    let exceeds = |i: usize| prefix[i + 1] > players[i].beta();

    let mut trace = Vec::new();
    let (mut lo, mut hi) = (0, k);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let hit = exceeds(mid);
        trace.push(SearchProbe {
            rank: mid,
            id: players[mid].id(),
            f_value: prefix[mid + 1],
            beta: players[mid].beta(),
            exceeds: hit,
        });
        if hit {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let first = lo;
    debug_assert!(
        k > 64 || (0..k).find(|&i| exceeds(i)).unwrap_or(k) == first,
        "search predicate is not monotone"
    );

    let critical = if first == k {
        k - 1
    } else if prefix[first] <= players[first].beta() {
        first
    } else {
        first - 1
    };

    let mut batch = vec![0.0; k];
    for (b, p) in batch.iter_mut().zip(players).take(critical) {
        *b = p.b_max();
    }
    batch[critical] = cofl_best_response(inst, critical, prefix[critical]);
    let profile = StrategyProfile::new(batch);

    let b_nash = profile.global_batchsize();
    let interior = (b_nash - players[critical].beta()).abs() <= INTERIOR_TOL;
    let property = if interior {
        EquilibriumProperty::P2
    } else {
        EquilibriumProperty::P1
    };
    let type_labels = (0..k)
        .map(|i| match i.cmp(&critical) {
            std::cmp::Ordering::Less => ParticipantType::Type1,
            std::cmp::Ordering::Equal if interior => ParticipantType::Type2,
            std::cmp::Ordering::Equal => ParticipantType::Type1,
            std::cmp::Ordering::Greater => ParticipantType::Type3,
        })
        .collect();

    let total_utility = total_utility_of(inst, &profile);
    let f_o_at_critical = prefix[critical] + profile.get(critical);
    Ok(CoflSolution {
        result: EquilibriumResult {
            profile,
            critical_index: Some(players[critical].id()),
            type_labels,
            removed: Vec::new(),
            iterations: 0,
            total_utility,
            property: Some(property),
        },
        f_o_at_critical,
        trace,
    })
}
