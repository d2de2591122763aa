//! Reference allocators for the comparison curves. Both use equal power
//! `P_total / N` on every subcarrier so they differ from the proposed method
//! only in how subcarriers are assigned.

use crate::allocator::{Allocation, Assignment};
use crate::channel::{GainGrid, SystemParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Each subcarrier to the user with the largest gain on it (lowest index on
/// ties). Maximizes throughput under equal power and ignores fairness, so
/// some users may end up with nothing.
pub fn greedy_max_rate<T: Scalar>(grid: &GainGrid<T>, params: &SystemParams<T>) -> Result<Allocation<T>> {
    params.validate()?;
    grid.check_matches(params)?;
    let owners: Vec<usize> = (0..params.num_subcarriers)
        .map(|n| {
            (1..params.num_users).fold(0, |best, k| if grid.get(k, n) > grid.get(best, n) { k } else { best })
        })
        .collect();
    let assignment = Assignment::from_owners(&owners, params.num_users)?;
    Ok(Allocation::equal_power(assignment, params.equal_power()))
}

/// Contiguous, channel-oblivious blocks in user order. The first `N mod K`
/// users get one extra subcarrier.
pub fn static_block_fdma<T: Scalar>(params: &SystemParams<T>) -> Result<Assignment> {
    let (k, n) = (params.num_users, params.num_subcarriers);
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot split {n} subcarriers among {k} users")));
    }
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    let sets = (0..k)
        .map(|user| {
            let len = base + usize::from(user < extra);
            let block = (start..start + len).collect();
            start += len;
            block
        })
        .collect();
    Assignment::new(sets, n)
}

/// [`static_block_fdma`] with equal power.
pub fn static_block_fdma_allocation<T: Scalar>(params: &SystemParams<T>) -> Result<Allocation<T>> {
    Ok(Allocation::equal_power(static_block_fdma(params)?, params.equal_power()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: usize, n: usize) -> SystemParams<f64> {
        SystemParams::new(k, n, 1.0, 1.0, n as f64).unwrap()
    }

    #[test]
    fn greedy_single_user() {
        let grid = GainGrid::from_rows(vec![vec![1.0, 3.0, 2.0]]).unwrap();
        let a = greedy_max_rate(&grid, &params(1, 3)).unwrap();
        assert_eq!(a.assignment().set(0), &[0, 1, 2]);
        assert_eq!(a.total_power(), 3.0);
    }

    #[test]
    fn greedy_dominant_user_takes_all() {
        let grid = GainGrid::from_rows(vec![vec![5.0, 5.0, 5.0], vec![1.0, 2.0, 4.0]]).unwrap();
        let a = greedy_max_rate(&grid, &params(2, 3)).unwrap();
        assert_eq!(a.assignment().set(0), &[0, 1, 2]);
        assert!(a.assignment().set(1).is_empty());
    }

    #[test]
    fn greedy_column_argmax() {
        let grid = GainGrid::from_rows(vec![vec![3.0, 1.0], vec![2.0, 4.0]]).unwrap();
        let a = greedy_max_rate(&grid, &params(2, 2)).unwrap();
        assert_eq!(a.assignment().sets(), &[vec![0], vec![1]]);
    }

    #[test]
    fn greedy_ties_go_to_lowest_index() {
        let grid = GainGrid::uniform(2, 2, 1.0).unwrap();
        let a = greedy_max_rate(&grid, &params(2, 2)).unwrap();
        assert_eq!(a.assignment().set(0), &[0, 1]);
    }

    #[test]
    fn greedy_rejects_shape_mismatch() {
        let grid = GainGrid::uniform(3, 3, 1.0).unwrap();
        assert!(greedy_max_rate(&grid, &params(2, 3)).is_err());
    }

    #[test]
    fn fdma_blocks() {
        let a = static_block_fdma(&params(2, 4)).unwrap();
        assert_eq!(a.sets(), &[vec![0, 1], vec![2, 3]]);
        let a = static_block_fdma(&params(3, 64)).unwrap();
        assert_eq!(a.cardinalities(), vec![22, 21, 21]);
        assert!(a.is_full_partition());
        let bogus = SystemParams { num_users: 3, num_subcarriers: 2, bandwidth: 1.0, noise_density: 1.0, total_power: 1.0 };
        assert!(static_block_fdma(&bogus).is_err());
    }

    #[test]
    fn fdma_power_is_conserved() {
        let p = params(3, 10);
        let a = static_block_fdma_allocation(&p).unwrap();
        assert!((a.total_power() - p.total_power).abs() < 1e-12);
    }
}
