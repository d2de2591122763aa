//! Two-phase proportional-rate-fair allocation.
//!
//! Phase one ([`allocate_subcarriers`]) assumes equal power on every
//! subcarrier and repeatedly lets the user with the smallest weighted rate
//! `R_k / phi_k` claim its strongest unassigned subcarrier. Phase two
//! ([`reallocate_power`]) starts from that equal split and moves a fixed
//! power quantum from the most over-served user to the most under-served one,
//! water-filling both users' budgets, for as long as the mean absolute share
//! deviation keeps falling.
//!
//! Rates are in bps/Hz and carry the `1/N` factor throughout. All argmin and
//! argmax ties resolve to the lowest user or subcarrier index.

use crate::channel::{check_permutation, GainGrid, SystemParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::waterfill::{raw_rate, waterfill};

/// Target rate proportions `phi_k`, one positive entry per user.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessWeights<T>(Vec<T>);

impl<T: Scalar> FairnessWeights<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("at least one fairness weight is required"));
        }
        if let Some(k) = weights.iter().position(|&w| !(w.is_finite() && w > T::zero())) {
            return Err(Error::invalid(format!("weight {k} must be positive and finite")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(users: usize) -> Self {
        Self::new(vec![T::one(); users.max(1)]).expect("uniform weights are valid")
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> T {
        self.0.iter().copied().sum()
    }

    /// Entry `i` of the result is entry `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.0.len())?;
        Ok(Self(order.iter().map(|&k| self.0[k]).collect()))
    }
}

/// Disjoint subcarrier sets, one per user. Sets are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    sets: Vec<Vec<usize>>,
    num_subcarriers: usize,
}

impl Assignment {
    pub fn new(mut sets: Vec<Vec<usize>>, num_subcarriers: usize) -> Result<Self> {
        let mut owned = vec![false; num_subcarriers];
        for (k, set) in sets.iter_mut().enumerate() {
            set.sort_unstable();
            for &n in set.iter() {
                if n >= num_subcarriers {
                    return Err(Error::invalid(format!("user {k} holds out-of-range subcarrier {n}")));
                }
                if std::mem::replace(&mut owned[n], true) {
                    return Err(Error::invalid(format!("subcarrier {n} is assigned twice")));
                }
            }
        }
        Ok(Self { sets, num_subcarriers })
    }

    /// Builds from an owner table: `owners[n]` is the user holding subcarrier `n`.
    pub fn from_owners(owners: &[usize], num_users: usize) -> Result<Self> {
        let mut sets = vec![Vec::new(); num_users];
        for (n, &k) in owners.iter().enumerate() {
            sets.get_mut(k)
                .ok_or_else(|| Error::invalid(format!("subcarrier {n} owned by unknown user {k}")))?
                .push(n);
        }
        Self::new(sets, owners.len())
    }

    pub fn num_users(&self) -> usize {
        self.sets.len()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn set(&self, user: usize) -> &[usize] {
        &self.sets[user]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// `N_k` for every user.
    pub fn cardinalities(&self) -> Vec<usize> {
        self.sets.iter().map(Vec::len).collect()
    }

    /// Owner of each subcarrier, `None` when unassigned.
    pub fn owners(&self) -> Vec<Option<usize>> {
        let mut owners = vec![None; self.num_subcarriers];
        for (k, set) in self.sets.iter().enumerate() {
            for &n in set {
                owners[n] = Some(k);
            }
        }
        owners
    }

    pub fn is_full_partition(&self) -> bool {
        self.sets.iter().map(Vec::len).sum::<usize>() == self.num_subcarriers
    }

    /// Same sets with users relabeled: user `i` of the result is user `order[i]`.
    pub fn permute_users(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.sets.len())?;
        Self::new(order.iter().map(|&k| self.sets[k].clone()).collect(), self.num_subcarriers)
    }
}

/// An assignment plus the power on each held subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<T> {
    assignment: Assignment,
    /// `powers[k][j]` is the power on subcarrier `assignment.set(k)[j]`.
    powers: Vec<Vec<T>>,
}

impl<T: Scalar> Allocation<T> {
    pub fn new(assignment: Assignment, powers: Vec<Vec<T>>) -> Result<Self> {
        if powers.len() != assignment.num_users()
            || powers.iter().zip(assignment.sets()).any(|(p, s)| p.len() != s.len())
        {
            return Err(Error::invalid("power table does not match the assignment"));
        }
        if powers.iter().flatten().any(|&p| !(p.is_finite() && p >= T::zero())) {
            return Err(Error::invalid("powers must be finite and non-negative"));
        }
        Ok(Self { assignment, powers })
    }

    /// The same power on every assigned subcarrier.
    pub fn equal_power(assignment: Assignment, per_subcarrier: T) -> Self {
        let powers = assignment.sets().iter().map(|s| vec![per_subcarrier; s.len()]).collect();
        Self { assignment, powers }
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn user_powers(&self, user: usize) -> &[T] {
        &self.powers[user]
    }

    pub fn user_power(&self, user: usize) -> T {
        self.powers[user].iter().copied().sum()
    }

    pub fn total_power(&self) -> T {
        self.powers.iter().flatten().copied().sum()
    }

    /// Dense `K x N` power table with zeros off the assignment.
    pub fn power_matrix(&self) -> Vec<Vec<T>> {
        let n = self.assignment.num_subcarriers();
        self.assignment
            .sets()
            .iter()
            .zip(&self.powers)
            .map(|(set, p)| {
                let mut row = vec![T::zero(); n];
                for (&sc, &pw) in set.iter().zip(p) {
                    row[sc] = pw;
                }
                row
            })
            .collect()
    }
}

/// Rate shares against target shares.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport<T> {
    /// `xi_k = phi_k / sum(phi) - R_k / sum(R)`. Positive means user `k` gets
    /// less than its share.
    pub deviations: Vec<T>,
    /// `Delta = mean_k |xi_k|`.
    pub mean_abs_deviation: T,
    pub rates: Vec<T>,
    pub rate_sum: T,
}

impl<T: Scalar> DeviationReport<T> {
    /// Index of the largest deviation (most under-served user).
    pub fn most_under_served(&self) -> usize {
        arg_best(&self.deviations, |a, b| a > b)
    }

    /// Index of the smallest deviation (most over-served user).
    pub fn most_over_served(&self) -> usize {
        arg_best(&self.deviations, |a, b| a < b)
    }
}

/// First index whose value beats every earlier one under `better`.
fn arg_best<T: Copy>(values: &[T], better: impl Fn(T, T) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if better(v, values[best]) {
            best = i;
        }
    }
    best
}

pub fn proportionality_deviation<T: Scalar>(rates: &[T], weights: &FairnessWeights<T>) -> Result<DeviationReport<T>> {
    if rates.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} rates but {} weights",
            rates.len(),
            weights.len()
        )));
    }
    if rates.iter().any(|&r| !(r.is_finite() && r >= T::zero())) {
        return Err(Error::invalid("rates must be finite and non-negative"));
    }
    let rate_sum: T = rates.iter().copied().sum();
    if rate_sum <= T::zero() {
        return Err(Error::DegenerateRates);
    }
    let weight_sum = weights.sum();
    let deviations: Vec<T> = rates
        .iter()
        .zip(weights.as_slice())
        .map(|(&r, &w)| w / weight_sum - r / rate_sum)
        .collect();
    let mean_abs_deviation =
        deviations.iter().map(|x| x.abs()).sum::<T>() / T::from_count(deviations.len());
    Ok(DeviationReport {
        deviations,
        mean_abs_deviation,
        rates: rates.to_vec(),
        rate_sum,
    })
}

/// `R_k = (1/N) sum_{n in S_k} log2(1 + p_kn h_kn)` for every user.
pub fn user_rates<T: Scalar>(allocation: &Allocation<T>, grid: &GainGrid<T>, params: &SystemParams<T>) -> Vec<T> {
    let n = params.num_subcarriers;
    allocation
        .assignment()
        .sets()
        .iter()
        .enumerate()
        .map(|(k, set)| raw_rate(&grid.gains_on(k, set), allocation.user_powers(k), n))
        .collect()
}

fn check_shapes<T: Scalar>(grid: &GainGrid<T>, weights: &FairnessWeights<T>, params: &SystemParams<T>) -> Result<()> {
    params.validate()?;
    grid.check_matches(params)?;
    if weights.len() != params.num_users {
        return Err(Error::invalid(format!(
            "{} weights for {} users",
            weights.len(),
            params.num_users
        )));
    }
    Ok(())
}

/// Greedy proportional subcarrier assignment under equal power, users
/// seeded in ascending index order.
pub fn allocate_subcarriers<T: Scalar>(
    grid: &GainGrid<T>,
    weights: &FairnessWeights<T>,
    params: &SystemParams<T>,
) -> Result<Assignment> {
    let order: Vec<usize> = (0..params.num_users).collect();
    allocate_subcarriers_in_order(grid, weights, params, &order)
}

/// As [`allocate_subcarriers`], but the initial one-subcarrier-per-user pass
/// visits users in `order`.
pub fn allocate_subcarriers_in_order<T: Scalar>(
    grid: &GainGrid<T>,
    weights: &FairnessWeights<T>,
    params: &SystemParams<T>,
    order: &[usize],
) -> Result<Assignment> {
    check_shapes(grid, weights, params)?;
    check_permutation(order, params.num_users)?;
    let n_total = params.num_subcarriers;
    let p = params.equal_power();
    let scale = (T::LN_2() * T::from_count(n_total)).recip();
    let phi = weights.as_slice();

    let mut free = vec![true; n_total];
    let mut sets = vec![Vec::new(); params.num_users];
    let mut rates = vec![T::zero(); params.num_users];

    let take = |user: usize, free: &mut [bool], sets: &mut [Vec<usize>], rates: &mut [T]| {
        let row = grid.row(user);
        let mut best: Option<usize> = None;
        for (n, &h) in row.iter().enumerate() {
            if free[n] && best.is_none_or(|b| h > row[b]) {
                best = Some(n);
            }
        }
        let n = best.expect("a free subcarrier remains");
        free[n] = false;
        sets[user].push(n);
        rates[user] = rates[user] + (p * row[n]).ln_1p() * scale;
    };

    for &user in order {
        take(user, &mut free, &mut sets, &mut rates);
    }
    for _ in params.num_users..n_total {
        let mut neediest = 0;
        for k in 1..params.num_users {
            if rates[k] / phi[k] < rates[neediest] / phi[neediest] {
                neediest = k;
            }
        }
        take(neediest, &mut free, &mut sets, &mut rates);
    }
    Assignment::new(sets, n_total)
}

/// Which way the power quantum flows in [`reallocate_power`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferDirection {
    /// From the most over-served user (min xi) to the most under-served (max xi).
    #[default]
    ToUnderServed,
    /// The opposite flow, matching the literal index naming of the original
    /// listing. Kept for comparison runs.
    LiteralPseudocode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReallocationOptions<T> {
    /// Power moved per exchange, W.
    pub step: T,
    pub max_iter: usize,
    pub direction: TransferDirection,
}

impl<T: Scalar> ReallocationOptions<T> {
    pub const DEFAULT_MAX_ITER: usize = 1000;

    /// `step = P_total / (8 N)`, 1000 iterations, prose direction.
    pub fn for_params(params: &SystemParams<T>) -> Self {
        Self::with_fraction(params, T::lit(0.125))
    }

    /// `step = fraction * P_total / N`.
    pub fn with_fraction(params: &SystemParams<T>, fraction: T) -> Self {
        Self {
            step: params.equal_power() * fraction,
            max_iter: Self::DEFAULT_MAX_ITER,
            direction: TransferDirection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// No distinct donor/recipient pair: every deviation is equal (always so for one user).
    Balanced,
    /// The last attempted exchange did not lower the mean deviation and was undone.
    NoImprovement,
    /// The donor held less than one step of power.
    DonorExhausted,
    IterationLimit,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Balanced => "balanced",
            StopReason::NoImprovement => "no_improvement",
            StopReason::DonorExhausted => "donor_exhausted",
            StopReason::IterationLimit => "iteration_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reallocation<T> {
    pub allocation: Allocation<T>,
    pub report: DeviationReport<T>,
    /// Deviation of the equal-power starting point.
    pub initial: DeviationReport<T>,
    /// Accepted exchanges.
    pub iterations: usize,
    pub stop: StopReason,
    /// Mean deviation at the start and after each accepted exchange.
    pub delta_trace: Vec<T>,
    /// Water-filling calls made, including those of the rejected final attempt.
    pub waterfill_calls: usize,
    /// Users whose powers come from water-filling rather than the initial equal split.
    pub reshaped: Vec<bool>,
}

/// Iterative power exchange between the two most-deviating users, starting
/// from `P_total / N` on every subcarrier.
pub fn reallocate_power<T: Scalar>(
    assignment: &Assignment,
    grid: &GainGrid<T>,
    weights: &FairnessWeights<T>,
    params: &SystemParams<T>,
    options: &ReallocationOptions<T>,
) -> Result<Reallocation<T>> {
    check_shapes(grid, weights, params)?;
    if assignment.num_users() != params.num_users || assignment.num_subcarriers() != params.num_subcarriers {
        return Err(Error::invalid("assignment does not match the system dimensions"));
    }
    if !assignment.is_full_partition() {
        return Err(Error::invalid("assignment must cover every subcarrier"));
    }
    if let Some(k) = assignment.sets().iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("user {k} holds no subcarriers")));
    }
    if !(options.step.is_finite() && options.step > T::zero()) {
        return Err(Error::invalid("power step must be positive and finite"));
    }

    let n_total = params.num_subcarriers;
    let gains: Vec<Vec<T>> = (0..params.num_users)
        .map(|k| grid.gains_on(k, assignment.set(k)))
        .collect();
    let per_subcarrier = params.equal_power();
    let mut budgets: Vec<T> = assignment
        .sets()
        .iter()
        .map(|s| per_subcarrier * T::from_count(s.len()))
        .collect();
    let mut powers: Vec<Vec<T>> = assignment.sets().iter().map(|s| vec![per_subcarrier; s.len()]).collect();
    let mut rates: Vec<T> = gains
        .iter()
        .zip(&powers)
        .map(|(g, p)| raw_rate(g, p, n_total))
        .collect();

    let initial = proportionality_deviation(&rates, weights)?;
    let mut report = initial.clone();
    let mut delta_trace = vec![report.mean_abs_deviation];
    let mut iterations = 0;
    let mut waterfill_calls = 0;
    let mut reshaped = vec![false; params.num_users];

    let stop = loop {
        if iterations >= options.max_iter {
            break StopReason::IterationLimit;
        }
        let under = report.most_under_served();
        let over = report.most_over_served();
        if under == over {
            break StopReason::Balanced;
        }
        let (recipient, donor) = match options.direction {
            TransferDirection::ToUnderServed => (under, over),
            TransferDirection::LiteralPseudocode => (over, under),
        };
        if budgets[donor] < options.step {
            break StopReason::DonorExhausted;
        }
        let donor_budget = budgets[donor] - options.step;
        let recipient_budget = budgets[recipient] + options.step;
        let donor_split = waterfill(&gains[donor], donor_budget)?;
        let recipient_split = waterfill(&gains[recipient], recipient_budget)?;
        waterfill_calls += 2;

        let mut candidate = rates.clone();
        candidate[donor] = raw_rate(&gains[donor], &donor_split.powers, n_total);
        candidate[recipient] = raw_rate(&gains[recipient], &recipient_split.powers, n_total);
        let next = proportionality_deviation(&candidate, weights)?;
        if next.mean_abs_deviation >= report.mean_abs_deviation {
            break StopReason::NoImprovement;
        }

        budgets[donor] = donor_budget;
        budgets[recipient] = recipient_budget;
        powers[donor] = donor_split.powers;
        powers[recipient] = recipient_split.powers;
        reshaped[donor] = true;
        reshaped[recipient] = true;
        rates = candidate;
        delta_trace.push(next.mean_abs_deviation);
        report = next;
        iterations += 1;
    };

    Ok(Reallocation {
        allocation: Allocation::new(assignment.clone(), powers)?,
        report,
        initial,
        iterations,
        stop,
        delta_trace,
        waterfill_calls,
        reshaped,
    })
}

/// Both phases end to end.
pub fn allocate<T: Scalar>(
    grid: &GainGrid<T>,
    weights: &FairnessWeights<T>,
    params: &SystemParams<T>,
    options: &ReallocationOptions<T>,
) -> Result<Reallocation<T>> {
    let assignment = allocate_subcarriers(grid, weights, params)?;
    reallocate_power(&assignment, grid, weights, params, options)
}
