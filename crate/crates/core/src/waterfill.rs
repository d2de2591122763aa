//! Single-user water-filling over a set of parallel Gaussian subchannels.
//!
//! For gains `h_j` and a budget `P`, the rate-maximizing split is
//! `w_j = (lambda - 1/h_j)^+` with the water level `lambda` chosen so that
//! `sum_j w_j = P`. Both solvers below sort the subchannels by `1/h_j` and
//! locate the active set exactly, then evaluate `lambda` in closed form on
//! that set, so the budget (or target rate) is met without iterative drift.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Power split produced by [`waterfill`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillResult<T> {
    /// Power per subchannel, in input order.
    pub powers: Vec<T>,
    pub water_level: T,
    /// Indices (into the input) that received positive power, best channel first.
    pub active: Vec<usize>,
}

impl<T: Scalar> WaterfillResult<T> {
    pub fn total_power(&self) -> T {
        self.powers.iter().copied().sum()
    }

    /// Checks the KKT conditions against `gains` and `budget`:
    /// non-negative powers, budget met within `rel_tol`, active channels
    /// sitting at the water level and inactive ones at or above it.
    pub fn certify(&self, gains: &[T], budget: T, rel_tol: T) -> Result<(), String> {
        if self.powers.len() != gains.len() {
            return Err("powers and gains differ in length".into());
        }
        if let Some(j) = self.powers.iter().position(|&w| !(w >= T::zero())) {
            return Err(format!("power {j} is negative"));
        }
        let total = self.total_power();
        let scale = budget.max(T::min_positive_value());
        if (total - budget).abs() > rel_tol * scale {
            return Err(format!("sum of powers {total} differs from budget {budget}"));
        }
        let level_tol = rel_tol * self.water_level.abs().max(T::one());
        let mut is_active = vec![false; gains.len()];
        for &j in &self.active {
            is_active[j] = true;
            let inv = gains[j].recip();
            if self.powers[j] <= T::zero() {
                return Err(format!("active channel {j} has no power"));
            }
            if (self.water_level - inv - self.powers[j]).abs() > level_tol {
                return Err(format!("active channel {j} is off the water level"));
            }
        }
        for (j, (&h, &w)) in gains.iter().zip(&self.powers).enumerate() {
            if !is_active[j] {
                if w != T::zero() {
                    return Err(format!("inactive channel {j} carries power"));
                }
                if h.recip() < self.water_level - level_tol {
                    return Err(format!("inactive channel {j} lies below the water level"));
                }
            }
        }
        Ok(())
    }
}

fn check_gains<T: Scalar>(gains: &[T]) -> Result<()> {
    if gains.is_empty() {
        return Err(Error::invalid("water-filling needs at least one subchannel"));
    }
    if let Some(j) = gains.iter().position(|&h| !(h.is_finite() && h > T::zero())) {
        return Err(Error::invalid(format!("gain {j} must be positive and finite")));
    }
    Ok(())
}

/// Subchannel indices ordered by increasing noise-to-gain ratio `1/h`
/// (best channel first, ties by index).
fn order_by_inverse_gain<T: Scalar>(inv: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..inv.len()).collect();
    order.sort_by(|&a, &b| inv[a].partial_cmp(&inv[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Rate-maximizing split of `budget` over subchannels with SNR coefficients `gains`.
pub fn waterfill<T: Scalar>(gains: &[T], budget: T) -> Result<WaterfillResult<T>> {
    check_gains(gains)?;
    if !(budget.is_finite() && budget >= T::zero()) {
        return Err(Error::invalid("budget must be finite and non-negative"));
    }
    let inv: Vec<T> = gains.iter().map(|h| h.recip()).collect();
    let order = order_by_inverse_gain(&inv);

    let mut powers = vec![T::zero(); gains.len()];
    if budget == T::zero() {
        return Ok(WaterfillResult {
            powers,
            water_level: inv[order[0]],
            active: Vec::new(),
        });
    }

    // prefix[m] = sum of the m smallest inverse gains
    let mut prefix = Vec::with_capacity(order.len() + 1);
    prefix.push(T::zero());
    for &j in &order {
        let last = *prefix.last().unwrap();
        prefix.push(last + inv[j]);
    }

    // Largest active set whose level clears its worst member; m = 1 always
    // qualifies for a positive budget.
    let (active_count, level) = (1..=order.len())
        .rev()
        .map(|m| (m, (budget + prefix[m]) / T::from_count(m)))
        .find(|&(m, level)| level > inv[order[m - 1]])
        .unwrap_or((1, budget + inv[order[0]]));

    let active = order[..active_count].to_vec();
    for &j in &active {
        powers[j] = level - inv[j];
    }
    Ok(WaterfillResult {
        powers,
        water_level: level,
        active,
    })
}

/// `(1 / n_total) * sum_j log2(1 + p_j h_j)`, in bps/Hz.
pub fn rate_on_set<T: Scalar>(gains: &[T], powers: &[T], n_total: usize) -> Result<T> {
    if gains.len() != powers.len() {
        return Err(Error::invalid(format!(
            "{} gains but {} powers",
            gains.len(),
            powers.len()
        )));
    }
    if n_total == 0 {
        return Err(Error::invalid("n_total must be at least 1"));
    }
    if powers.iter().any(|&p| !(p >= T::zero())) {
        return Err(Error::invalid("powers must be non-negative"));
    }
    Ok(raw_rate(gains, powers, n_total))
}

#[inline]
pub(crate) fn raw_rate<T: Scalar>(gains: &[T], powers: &[T], n_total: usize) -> T {
    let sum: T = gains.iter().zip(powers).map(|(&h, &p)| (p * h).ln_1p()).sum();
    sum / (T::LN_2() * T::from_count(n_total))
}

/// Least total power reaching `target_rate` on these subchannels, with the
/// water-filling split that achieves it.
///
/// On an active set of size `m` the rate is `(m log2 lambda + sum log2 h_j) / N`,
/// so the level has a closed form per candidate set. The correct set is the
/// smallest `m` whose level does not reach the next channel's `1/h`.
pub fn min_power_for_rate<T: Scalar>(gains: &[T], target_rate: T, n_total: usize) -> Result<(T, Vec<T>)> {
    check_gains(gains)?;
    if !(target_rate.is_finite() && target_rate >= T::zero()) {
        return Err(Error::invalid("target rate must be finite and non-negative"));
    }
    if n_total == 0 {
        return Err(Error::invalid("n_total must be at least 1"));
    }
    let mut powers = vec![T::zero(); gains.len()];
    if target_rate == T::zero() {
        return Ok((T::zero(), powers));
    }
    let inv: Vec<T> = gains.iter().map(|h| h.recip()).collect();
    let order = order_by_inverse_gain(&inv);
    let bits = target_rate * T::from_count(n_total);

    let mut log_gain_sum = T::zero();
    let mut level = T::zero();
    for (m, &j) in order.iter().enumerate() {
        log_gain_sum = log_gain_sum + gains[j].log2();
        let count = T::from_count(m + 1);
        level = ((bits - log_gain_sum) / count).exp2();
        match order.get(m + 1) {
            Some(&next) if level > inv[next] => continue,
            _ => break,
        }
    }
    for (p, &i) in powers.iter_mut().zip(&inv) {
        *p = (level - i).max(T::zero());
    }
    let total = powers.iter().copied().sum();
    Ok((total, powers))
}

/// Splits `budget` evenly over `count` subchannels.
pub fn equal_split<T: Scalar>(budget: T, count: usize) -> Vec<T> {
    if count == 0 {
        return Vec::new();
    }
    vec![budget / T::from_count(count); count]
}
