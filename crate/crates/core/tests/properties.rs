use pf_ofdma::allocator::{
    allocate_subcarriers, allocate_subcarriers_in_order, proportionality_deviation, reallocate_power, user_rates,
    Allocation, ReallocationOptions,
};
use pf_ofdma::baselines::{greedy_max_rate, static_block_fdma, static_block_fdma_allocation};
use pf_ofdma::channel::{frequency_response, generate_taps, snr_grid, user_rng};
use pf_ofdma::oracle::{best_rate_for_assignment, exhaustive_best, DEFAULT_GUARD};
use pf_ofdma::waterfill::{equal_split, min_power_for_rate, rate_on_set, waterfill};
use pf_ofdma::{FairnessWeights, GainGrid, PowerDelayProfile, SystemParams};
use proptest::prelude::*;

fn gains_strategy(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0.01f64..1.0, -2.0f64..2.0).prop_map(|(u, e)| -u.ln() * 10f64.powf(e)), 1..max_len)
}

/// Plain restatement of the subcarrier pass: no 1/N factor, rates re-summed after every pick.
fn literal_subcarrier_pass(grid: &GainGrid, phi: &[f64], p: f64) -> Vec<Vec<usize>> {
    let (k_users, n) = (grid.num_users(), grid.num_subcarriers());
    let mut pool: Vec<usize> = (0..n).collect();
    let mut sets = vec![Vec::new(); k_users];
    let rate = |k: usize, set: &[usize]| set.iter().map(|&m| (1.0 + p * grid.get(k, m)).log2()).sum::<f64>();
    let best_in_pool = |k: usize, pool: &[usize]| {
        let mut best = pool[0];
        for &m in pool {
            if grid.get(k, m) > grid.get(k, best) || (grid.get(k, m) == grid.get(k, best) && m < best) {
                best = m;
            }
        }
        best
    };
    for k in 0..k_users {
        let m = best_in_pool(k, &pool);
        sets[k].push(m);
        pool.retain(|&x| x != m);
    }
    while !pool.is_empty() {
        let mut i = 0;
        for k in 1..k_users {
            if rate(k, &sets[k]) / phi[k] < rate(i, &sets[i]) / phi[i] {
                i = k;
            }
        }
        let m = best_in_pool(i, &pool);
        sets[i].push(m);
        pool.retain(|&x| x != m);
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    sets
}

fn random_instance(k: usize, n: usize, seed: u64, power: f64) -> (GainGrid, SystemParams) {
    let params = SystemParams::new(k, n, 1.0e6, 1e-20, power).unwrap();
    let profile = if n >= 6 {
        PowerDelayProfile::table1()
    } else {
        PowerDelayProfile::new(vec![0.0, -4.35]).unwrap()
    };
    (snr_grid(&params, &profile, seed).unwrap(), params)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn waterfill_kkt_and_conservation(gains in gains_strategy(20), budget in 0.0f64..10.0) {
        let r = waterfill(&gains, budget).unwrap();
        r.certify(&gains, budget, 1e-9).unwrap();
    }

    #[test]
    fn waterfill_round_trip(gains in gains_strategy(20), budget in 0.01f64..10.0) {
        let n = gains.len() + 3;
        let r = waterfill(&gains, budget).unwrap();
        let rate = rate_on_set(&gains, &r.powers, n).unwrap();
        let (back, powers) = min_power_for_rate(&gains, rate, n).unwrap();
        prop_assert!((back - budget).abs() <= 1e-8 * budget, "{back} vs {budget}");
        let again = rate_on_set(&gains, &powers, n).unwrap();
        prop_assert!((again - rate).abs() <= 1e-9 * rate.max(1.0));
    }

    #[test]
    fn waterfill_beats_equal_split(gains in gains_strategy(20), budget in 0.0f64..10.0) {
        let n = gains.len();
        let wf = rate_on_set(&gains, &waterfill(&gains, budget).unwrap().powers, n).unwrap();
        let eq = rate_on_set(&gains, &equal_split(budget, n), n).unwrap();
        prop_assert!(wf >= eq - 1e-12 * eq.max(1.0));
    }

    #[test]
    fn waterfill_and_inverse_are_monotone(gains in gains_strategy(12), a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let n = gains.len();
        let r_lo = rate_on_set(&gains, &waterfill(&gains, lo).unwrap().powers, n).unwrap();
        let r_hi = rate_on_set(&gains, &waterfill(&gains, hi).unwrap().powers, n).unwrap();
        prop_assert!(r_hi >= r_lo);
        if hi > lo + 1e-9 {
            let p_lo = min_power_for_rate(&gains, lo, n).unwrap().0;
            let p_hi = min_power_for_rate(&gains, hi, n).unwrap().0;
            prop_assert!(p_hi > p_lo);
        }
    }

    #[test]
    fn dft_energy(seed in any::<u64>(), n in 6usize..128) {
        let profile = PowerDelayProfile::table1();
        let taps = generate_taps(&profile, &mut user_rng(seed, 0));
        let z = frequency_response(&taps, n).unwrap();
        let time: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
        let freq: f64 = z.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((freq - n as f64 * time).abs() <= 1e-9 * n as f64 * time);
    }

    #[test]
    fn greedy_pass_matches_literal_listing(k in 2usize..8, seed in any::<u64>(), power in 1.0f64..5.0,
                                           phi in prop::collection::vec(0.5f64..4.0, 8)) {
        let (grid, params) = random_instance(k, 32, seed, power);
        let w = FairnessWeights::new(phi[..k].to_vec()).unwrap();
        let a = allocate_subcarriers(&grid, &w, &params).unwrap();
        prop_assert!(a.is_full_partition());
        prop_assert!(a.cardinalities().iter().all(|&c| c >= 1));
        prop_assert_eq!(a.sets(), &literal_subcarrier_pass(&grid, &phi[..k], params.equal_power())[..]);
    }

    #[test]
    fn weight_scaling_changes_nothing(k in 2usize..8, seed in any::<u64>(), scale in 0.01f64..100.0) {
        let (grid, params) = random_instance(k, 32, seed, 2.0);
        let phi: Vec<f64> = (0..k).map(|i| 1.0 + (i % 3) as f64).collect();
        let w = FairnessWeights::new(phi.clone()).unwrap();
        let ws = FairnessWeights::new(phi.iter().map(|p| p * scale).collect()).unwrap();
        let a = allocate_subcarriers(&grid, &w, &params).unwrap();
        prop_assert_eq!(&a, &allocate_subcarriers(&grid, &ws, &params).unwrap());
        let opts = ReallocationOptions::for_params(&params);
        let r = reallocate_power(&a, &grid, &w, &params, &opts).unwrap();
        let rs = reallocate_power(&a, &grid, &ws, &params, &opts).unwrap();
        prop_assert_eq!(r.iterations, rs.iterations);
        prop_assert_eq!(r.allocation, rs.allocation);
    }

    #[test]
    fn reallocation_invariants(k in 2usize..10, seed in any::<u64>(), power in 1.0f64..5.0,
                               phi in prop::collection::vec(1.0f64..4.0, 10)) {
        let (grid, params) = random_instance(k, 64, seed, power);
        let w = FairnessWeights::new(phi[..k].to_vec()).unwrap();
        let a = allocate_subcarriers(&grid, &w, &params).unwrap();
        let out = reallocate_power(&a, &grid, &w, &params, &ReallocationOptions::for_params(&params)).unwrap();
        let total = out.allocation.total_power();
        prop_assert!((total - power).abs() <= 1e-9 * power);
        prop_assert!(out.report.deviations.iter().sum::<f64>().abs() <= 1e-12);
        prop_assert!(out.delta_trace.windows(2).all(|d| d[1] < d[0]));
        prop_assert!(out.report.mean_abs_deviation <= out.initial.mean_abs_deviation);
        prop_assert_eq!(out.delta_trace.len(), out.iterations + 1);
        for u in 0..k {
            if out.reshaped[u] {
                let gains = grid.gains_on(u, a.set(u));
                let budget = out.allocation.user_power(u);
                let wf = rate_on_set(&gains, out.allocation.user_powers(u), 64).unwrap();
                let eq = rate_on_set(&gains, &equal_split(budget, gains.len()), 64).unwrap();
                prop_assert!(wf >= eq - 1e-12 * eq);
            }
        }
        // Reported rates agree with a recomputation from the allocation.
        let rates = user_rates(&out.allocation, &grid, &params);
        for (a, b) in rates.iter().zip(&out.report.rates) {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn relabeling_users_relabels_the_oracle(seed in any::<u64>()) {
        let (grid, params) = random_instance(3, 4, seed, 1.0);
        let w = FairnessWeights::new(vec![1.0, 2.0, 3.0]).unwrap();
        let order = [2, 0, 1];
        let r = exhaustive_best(&grid, &w, &params, DEFAULT_GUARD).unwrap();
        let rp = exhaustive_best(&grid.permute_users(&order).unwrap(), &w.permuted(&order).unwrap(), &params, DEFAULT_GUARD).unwrap();
        prop_assert!((r.optimum_sum_rate - rp.optimum_sum_rate).abs() <= 1e-9 * r.optimum_sum_rate);
    }

    #[test]
    fn oracle_certificate_and_dominance(seed in any::<u64>(), k in 2usize..4) {
        let n = k + 2;
        let (grid, params) = random_instance(k, n, seed, 2.0);
        let w = FairnessWeights::new((1..=k).map(|i| i as f64).collect()).unwrap();
        let r = exhaustive_best(&grid, &w, &params, DEFAULT_GUARD).unwrap();
        let t0 = r.per_user_rates[0] / w.as_slice()[0];
        for (rate, phi) in r.per_user_rates.iter().zip(w.as_slice()) {
            prop_assert!((rate / phi - t0).abs() <= 1e-8 * t0);
        }
        let used: f64 = r.best_powers.iter().flatten().sum();
        prop_assert!((used - 2.0).abs() <= 1e-9 * 2.0);
        // Any fixed assignment, scored under the same exact-proportion rule, is dominated.
        let heuristic = allocate_subcarriers(&grid, &w, &params).unwrap();
        let fixed = best_rate_for_assignment(&heuristic, &grid, &w, &params).unwrap();
        prop_assert!(fixed.sum_rate <= r.optimum_sum_rate * (1.0 + 1e-12));
    }

    #[test]
    fn baselines_conserve_power(k in 1usize..10, seed in any::<u64>(), power in 0.5f64..5.0) {
        let (grid, params) = random_instance(k, 64, seed, power);
        let g = greedy_max_rate(&grid, &params).unwrap();
        prop_assert!((g.total_power() - power).abs() <= 1e-12 * power);
        prop_assert!(g.assignment().is_full_partition());
        let f = static_block_fdma_allocation(&params).unwrap();
        prop_assert!((f.total_power() - power).abs() <= 1e-12 * power);
        let sizes = static_block_fdma(&params).unwrap().cardinalities();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn rates_ignore_order_within_a_set(seed in any::<u64>()) {
        let (grid, params) = random_instance(2, 8, seed, 1.0);
        let a = allocate_subcarriers(&grid, &FairnessWeights::uniform(2), &params).unwrap();
        let alloc = Allocation::equal_power(a.clone(), params.equal_power());
        let swapped = Allocation::equal_power(a.permute_users(&[0, 1]).unwrap(), params.equal_power());
        prop_assert_eq!(user_rates(&alloc, &grid, &params), user_rates(&swapped, &grid, &params));
    }
}

#[test]
fn rayleigh_calibration() {
    let profile = PowerDelayProfile::table1();
    let n = 64;
    let realizations = 10_000;
    let mut acc = 0.0;
    for r in 0..realizations {
        let taps = generate_taps(&profile, &mut user_rng(r as u64, 0));
        acc += frequency_response(&taps, n).unwrap().iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    let mean = acc / (realizations * n) as f64;
    assert!((mean - 1.0).abs() < 0.02, "mean |z|^2 = {mean}");
}

#[test]
fn order_only_changes_the_seeding_pass() {
    let (grid, params) = random_instance(4, 16, 3, 1.0);
    let w = FairnessWeights::uniform(4);
    let natural = allocate_subcarriers(&grid, &w, &params).unwrap();
    let same = allocate_subcarriers_in_order(&grid, &w, &params, &[0, 1, 2, 3]).unwrap();
    assert_eq!(natural, same);
    assert!(allocate_subcarriers_in_order(&grid, &w, &params, &[0, 1, 1, 3]).is_err());
}

#[test]
fn deviation_sums_to_zero() {
    let w = FairnessWeights::new(vec![1.0, 2.0, 5.0]).unwrap();
    let r = proportionality_deviation(&[0.3, 7.0, 1.1], &w).unwrap();
    assert!(r.deviations.iter().sum::<f64>().abs() < 1e-15);
}
