//! Exact optimum of the joint assignment/power problem for toy instances.
//!
//! Every one of the `K^N` owner tables is scored by the largest sum rate it
//! can reach while the weighted rates are exactly equal, `R_k = phi_k t`.
//! For a fixed assignment that is a scalar search: the least power giving
//! user `k` rate `phi_k t` is an inverse water-filling, and the total is
//! increasing in `t`, so `t` is found by bisection against `P_total`.

use rayon::prelude::*;

use crate::allocator::{Assignment, FairnessWeights};
use crate::channel::{GainGrid, SystemParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::waterfill::{min_power_for_rate, raw_rate};

pub const DEFAULT_GUARD: u64 = 1_000_000;

/// Best proportional-rate operating point of one assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentScore<T> {
    pub sum_rate: T,
    /// Common normalized rate `t = R_k / phi_k`.
    pub level: T,
    /// `powers[k][j]` on subcarrier `assignment.set(k)[j]`.
    pub powers: Vec<Vec<T>>,
    pub rates: Vec<T>,
    /// Some user could not reach a positive rate, which pins `t` to zero.
    pub starved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub best_assignment: Assignment,
    pub best_powers: Vec<Vec<T>>,
    pub optimum_sum_rate: T,
    pub per_user_rates: Vec<T>,
    pub assignments_evaluated: u64,
}

fn check_shapes<T: Scalar>(
    assignment: Option<&Assignment>,
    grid: &GainGrid<T>,
    weights: &FairnessWeights<T>,
    params: &SystemParams<T>,
) -> Result<()> {
    params.validate()?;
    grid.check_matches(params)?;
    if weights.len() != params.num_users {
        return Err(Error::invalid("weight count does not match num_users"));
    }
    if let Some(a) = assignment {
        if a.num_users() != params.num_users || a.num_subcarriers() != params.num_subcarriers {
            return Err(Error::invalid("assignment does not match the system dimensions"));
        }
    }
    Ok(())
}

pub fn best_rate_for_assignment<T: Scalar>(
    assignment: &Assignment,
    grid: &GainGrid<T>,
    weights: &FairnessWeights<T>,
    params: &SystemParams<T>,
) -> Result<AssignmentScore<T>> {
    check_shapes(Some(assignment), grid, weights, params)?;
    score(assignment, grid, weights, params)
}

fn score<T: Scalar>(
    assignment: &Assignment,
    grid: &GainGrid<T>,
    weights: &FairnessWeights<T>,
    params: &SystemParams<T>,
) -> Result<AssignmentScore<T>> {
    let k_users = params.num_users;
    let n_total = params.num_subcarriers;
    let budget = params.total_power;
    let phi = weights.as_slice();

    // Zero-gain subcarriers cannot carry rate; they stay at zero power.
    let usable: Vec<Vec<usize>> = (0..k_users)
        .map(|k| {
            (0..assignment.set(k).len())
                .filter(|&j| grid.get(k, assignment.set(k)[j]) > T::zero())
                .collect()
        })
        .collect();
    let gains: Vec<Vec<T>> = (0..k_users)
        .map(|k| usable[k].iter().map(|&j| grid.get(k, assignment.set(k)[j])).collect())
        .collect();

    let zero_powers = || assignment.sets().iter().map(|s| vec![T::zero(); s.len()]).collect::<Vec<_>>();
    if gains.iter().any(Vec::is_empty) {
        return Ok(AssignmentScore {
            sum_rate: T::zero(),
            level: T::zero(),
            powers: zero_powers(),
            rates: vec![T::zero(); k_users],
            starved: true,
        });
    }

    let total_at = |t: T| -> Result<(T, Vec<Vec<T>>)> {
        let mut total = T::zero();
        let mut split = Vec::with_capacity(k_users);
        for (g, &w) in gains.iter().zip(phi) {
            let (p, powers) = min_power_for_rate(g, w * t, n_total)?;
            total = total + p;
            split.push(powers);
        }
        Ok((total, split))
    };

    // User k alone with the whole budget on every one of its subcarriers
    // cannot exceed |S_k|/N * log2(1 + P max h), so t above the smallest
    // such cap (over phi_k) is infeasible.
    let mut hi = T::infinity();
    for (g, &w) in gains.iter().zip(phi) {
        let h_max = g.iter().copied().fold(T::zero(), T::max);
        let cap = T::from_count(g.len()) / T::from_count(n_total) * (budget * h_max).ln_1p() / T::LN_2();
        hi = hi.min(cap / w);
    }
    let mut lo = T::zero();
    let (_, mut best_split) = total_at(lo)?;
    for _ in 0..400 {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        let (total, split) = total_at(mid)?;
        if total <= budget {
            lo = mid;
            best_split = split;
        } else {
            hi = mid;
        }
    }

    let mut powers = zero_powers();
    for k in 0..k_users {
        for (&j, &p) in usable[k].iter().zip(&best_split[k]) {
            powers[k][j] = p;
        }
    }
    let rates: Vec<T> = (0..k_users)
        .map(|k| raw_rate(&grid.gains_on(k, assignment.set(k)), &powers[k], n_total))
        .collect();
    Ok(AssignmentScore {
        sum_rate: rates.iter().copied().sum(),
        level: lo,
        powers,
        rates,
        starved: false,
    })
}

/// Number of owner tables, `K^N`, if it fits in a `u64`.
pub fn assignment_count(users: usize, subcarriers: usize) -> Option<u64> {
    (users as u64).checked_pow(u32::try_from(subcarriers).ok()?)
}

/// Owner table number `index` in lexicographic order (subcarrier 0 most significant).
fn decode_owners(mut index: u64, users: usize, subcarriers: usize) -> Vec<usize> {
    let mut owners = vec![0; subcarriers];
    for slot in owners.iter_mut().rev() {
        *slot = (index % users as u64) as usize;
        index /= users as u64;
    }
    owners
}

/// Brute force over all `K^N` assignments. Ties go to the lexicographically
/// smallest owner table.
pub fn exhaustive_best<T: Scalar>(
    grid: &GainGrid<T>,
    weights: &FairnessWeights<T>,
    params: &SystemParams<T>,
    guard: u64,
) -> Result<OracleResult<T>> {
    check_shapes(None, grid, weights, params)?;
    let (k, n) = (params.num_users, params.num_subcarriers);
    let total = assignment_count(k, n)
        .filter(|&c| c <= guard)
        .ok_or(Error::Sizing {
            users: k,
            subcarriers: n,
            guard,
        })?;

    let (best_index, best) = (0..total)
        .into_par_iter()
        .map(|index| {
            let a = Assignment::from_owners(&decode_owners(index, k, n), k)?;
            Ok::<_, Error>((index, score(&a, grid, weights, params)?))
        })
        .try_reduce_with(|a: (u64, AssignmentScore<T>), b| {
            let b_wins = b.1.sum_rate > a.1.sum_rate || (b.1.sum_rate == a.1.sum_rate && b.0 < a.0);
            Ok(if b_wins { b } else { a })
        })
        .expect("at least one assignment")?;

    Ok(OracleResult {
        best_assignment: Assignment::from_owners(&decode_owners(best_index, k, n), k)?,
        best_powers: best.powers,
        optimum_sum_rate: best.sum_rate,
        per_user_rates: best.rates,
        assignments_evaluated: total,
    })
}
