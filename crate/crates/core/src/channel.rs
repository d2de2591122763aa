//! Frequency-selective Rayleigh channel realizations and the per-subcarrier
//! SNR grid consumed by every allocator.
//!
//! A realization is a vector of independent circularly-symmetric complex
//! Gaussian taps whose variances follow a power-delay profile normalized to
//! unit total power. The subcarrier responses are the `N`-point DFT of the
//! zero-padded tap vector, so `E|z_n|^2 = 1` on every subcarrier.
//!
//! Seeding: each trial owns a 64-bit seed (see [`trial_seed`]); user `k`
//! draws its taps from a ChaCha20 generator keyed by that seed on stream `k`.
//! A trial is therefore reproducible in isolation and users are independent.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative tap powers of the six-tap exponentially decaying profile, in dB.
pub const TABLE1_PROFILE_DB: [f64; 6] = [0.0, -4.35, -8.69, -13.08, -17.43, -21.78];

/// Noise spectral density of the reference setup, dBm/Hz.
pub const TABLE1_NOISE_DBM_PER_HZ: f64 = -170.0;

pub const TABLE1_BANDWIDTH_HZ: f64 = 1.0e6;
pub const TABLE1_SUBCARRIERS: usize = 64;
pub const TABLE1_USERS: usize = 10;

/// Converts a spectral density in dBm/Hz to W/Hz.
pub fn dbm_per_hz_to_watts<T: Scalar>(dbm: T) -> T {
    T::lit(10.0).powf(dbm / T::lit(10.0)) * T::lit(1e-3)
}

/// Average power of each multipath tap.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile<T> {
    relative_powers_db: Vec<T>,
    normalized: Vec<T>,
}

impl<T: Scalar> PowerDelayProfile<T> {
    pub fn new(relative_powers_db: Vec<T>) -> Result<Self> {
        if relative_powers_db.is_empty() {
            return Err(Error::invalid("power-delay profile must have at least one tap"));
        }
        if let Some(i) = relative_powers_db.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("tap {i} power is not finite")));
        }
        let linear: Vec<T> = relative_powers_db
            .iter()
            .map(|&db| T::lit(10.0).powf(db / T::lit(10.0)))
            .collect();
        let total: T = linear.iter().copied().sum();
        let normalized = linear.into_iter().map(|p| p / total).collect();
        Ok(Self {
            relative_powers_db,
            normalized,
        })
    }

    /// The six-tap exponentially decaying reference profile.
    pub fn table1() -> Self {
        Self::new(TABLE1_PROFILE_DB.iter().map(|&p| T::lit(p)).collect())
            .expect("reference profile is valid")
    }

    /// Single tap: a flat (frequency-nonselective) Rayleigh channel.
    pub fn flat() -> Self {
        Self::new(vec![T::zero()]).expect("single tap is valid")
    }

    pub fn relative_powers_db(&self) -> &[T] {
        &self.relative_powers_db
    }

    /// Linear tap powers scaled to sum to one.
    pub fn normalized_powers(&self) -> &[T] {
        &self.normalized
    }

    pub fn num_taps(&self) -> usize {
        self.normalized.len()
    }
}

/// Link-level system parameters, all in linear SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams<T> {
    pub num_users: usize,
    pub num_subcarriers: usize,
    /// Hz.
    pub bandwidth: T,
    /// W/Hz.
    pub noise_density: T,
    /// W.
    pub total_power: T,
}

impl<T: Scalar> SystemParams<T> {
    pub fn new(
        num_users: usize,
        num_subcarriers: usize,
        bandwidth: T,
        noise_density: T,
        total_power: T,
    ) -> Result<Self> {
        let params = Self {
            num_users,
            num_subcarriers,
            bandwidth,
            noise_density,
            total_power,
        };
        params.validate()?;
        Ok(params)
    }

    /// Reference setup at the given total power.
    pub fn table1(total_power: T) -> Self {
        Self::new(
            TABLE1_USERS,
            TABLE1_SUBCARRIERS,
            T::lit(TABLE1_BANDWIDTH_HZ),
            dbm_per_hz_to_watts(T::lit(TABLE1_NOISE_DBM_PER_HZ)),
            total_power,
        )
        .expect("reference parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(Error::invalid("num_users must be at least 1"));
        }
        if self.num_subcarriers < self.num_users {
            return Err(Error::invalid(format!(
                "num_subcarriers ({}) must be >= num_users ({})",
                self.num_subcarriers, self.num_users
            )));
        }
        let positive = |v: T| v.is_finite() && v > T::zero();
        if !positive(self.bandwidth) {
            return Err(Error::invalid("bandwidth must be positive and finite"));
        }
        if !positive(self.noise_density) {
            return Err(Error::invalid("noise_density must be positive and finite"));
        }
        if !positive(self.total_power) {
            return Err(Error::invalid("total_power must be positive and finite"));
        }
        Ok(())
    }

    pub fn with_total_power(mut self, total_power: T) -> Self {
        self.total_power = total_power;
        self
    }

    /// AWGN variance on one subcarrier, `N0 * B / N`, in W.
    pub fn noise_per_subcarrier(&self) -> T {
        self.noise_density * self.bandwidth / T::from_count(self.num_subcarriers)
    }

    /// `P_total / N`, the equal per-subcarrier power.
    pub fn equal_power(&self) -> T {
        self.total_power / T::from_count(self.num_subcarriers)
    }
}

/// `K x N` matrix of SNR coefficients `h_kn = |z_kn|^2 / (N0 B / N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainGrid<T> {
    users: usize,
    subcarriers: usize,
    values: Vec<T>,
}

impl<T: Scalar> GainGrid<T> {
    /// Builds a grid from row-major values.
    pub fn new(users: usize, subcarriers: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != users * subcarriers {
            return Err(Error::invalid(format!(
                "grid of {users}x{subcarriers} needs {} values, got {}",
                users * subcarriers,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::invalid(format!(
                "gain ({}, {}) must be finite and non-negative",
                i / subcarriers.max(1),
                i % subcarriers.max(1)
            )));
        }
        Ok(Self {
            users,
            subcarriers,
            values,
        })
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let users = rows.len();
        let subcarriers = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != subcarriers) {
            return Err(Error::invalid("grid rows have unequal lengths"));
        }
        Self::new(users, subcarriers, rows.into_iter().flatten().collect())
    }

    /// Every entry equal to `value`.
    pub fn uniform(users: usize, subcarriers: usize, value: T) -> Result<Self> {
        Self::new(users, subcarriers, vec![value; users * subcarriers])
    }

    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn num_subcarriers(&self) -> usize {
        self.subcarriers
    }

    #[inline]
    pub fn get(&self, user: usize, subcarrier: usize) -> T {
        self.values[user * self.subcarriers + subcarrier]
    }

    pub fn row(&self, user: usize) -> &[T] {
        &self.values[user * self.subcarriers..(user + 1) * self.subcarriers]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Gains of `user` on the listed subcarriers, in list order.
    pub fn gains_on(&self, user: usize, subcarriers: &[usize]) -> Vec<T> {
        subcarriers.iter().map(|&n| self.get(user, n)).collect()
    }

    /// Same grid with users reordered: row `i` of the result is row `order[i]`.
    pub fn permute_users(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.users)?;
        let values = order.iter().flat_map(|&k| self.row(k).iter().copied()).collect();
        Self::new(self.users, self.subcarriers, values)
    }

    pub(crate) fn check_matches(&self, params: &SystemParams<T>) -> Result<()> {
        if self.users != params.num_users || self.subcarriers != params.num_subcarriers {
            return Err(Error::invalid(format!(
                "gain grid is {}x{} but parameters describe {} users x {} subcarriers",
                self.users, self.subcarriers, params.num_users, params.num_subcarriers
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_permutation(order: &[usize], len: usize) -> Result<()> {
    let mut seen = vec![false; len];
    if order.len() != len {
        return Err(Error::invalid("permutation has wrong length"));
    }
    for &i in order {
        if i >= len || std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid("not a permutation"));
        }
    }
    Ok(())
}

/// Draws one set of tap amplitudes. Tap `t` is `CN(0, p_t)` with `p_t` the
/// normalized linear power of the tap.
pub fn generate_taps<T, R>(profile: &PowerDelayProfile<T>, rng: &mut R) -> Vec<Complex<T>>
where
    T: Scalar,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    let half = T::lit(0.5);
    profile
        .normalized_powers()
        .iter()
        .map(|&p| {
            let sigma = (p * half).sqrt();
            let re: T = StandardNormal.sample(rng);
            let im: T = StandardNormal.sample(rng);
            Complex::new(re * sigma, im * sigma)
        })
        .collect()
}

/// `N`-point DFT of the zero-padded tap vector:
/// `z_n = sum_t tap_t * exp(-j 2 pi n t / N)`.
pub fn frequency_response<T: Scalar>(taps: &[Complex<T>], n: usize) -> Result<Vec<Complex<T>>> {
    if taps.len() > n {
        return Err(Error::invalid(format!(
            "{} taps do not fit in a {n}-point DFT",
            taps.len()
        )));
    }
    let step = -T::TAU() / T::from_count(n.max(1));
    Ok((0..n)
        .map(|k| {
            taps.iter()
                .enumerate()
                // (k * t) mod n keeps the phase argument small
                .map(|(t, &tap)| tap * Complex::from_polar(T::one(), step * T::from_count((k * t) % n)))
                .fold(Complex::new(T::zero(), T::zero()), |acc, v| acc + v)
        })
        .collect())
}

/// Per-trial seed from the run's base seed and a trial index (SplitMix64
/// finalizer over `base_seed + trial_index * golden_gamma`).
pub fn trial_seed(base_seed: u64, trial_index: u64) -> u64 {
    let mut z = base_seed.wrapping_add(trial_index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for user `user` within the trial keyed by `seed`.
pub fn user_rng(seed: u64, user: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(user as u64);
    rng
}

/// One independent channel realization per user, converted to SNR
/// coefficients. Deterministic in `(params, profile, seed)`.
pub fn snr_grid<T>(params: &SystemParams<T>, profile: &PowerDelayProfile<T>, seed: u64) -> Result<GainGrid<T>>
where
    T: Scalar,
    StandardNormal: Distribution<T>,
{
    params.validate()?;
    let n = params.num_subcarriers;
    let scale = params.noise_per_subcarrier().recip();
    let mut values = Vec::with_capacity(params.num_users * n);
    for user in 0..params.num_users {
        let mut rng = user_rng(seed, user);
        let taps = generate_taps(profile, &mut rng);
        values.extend(frequency_response(&taps, n)?.into_iter().map(|z| z.norm_sqr() * scale));
    }
    GainGrid::new(params.num_users, n, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn table1_tap_zero_share() {
        let profile = PowerDelayProfile::<f64>::table1();
        let p = profile.normalized_powers();
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // 1 / sum_t 10^(p_t/10) over the six reference taps
        assert_relative_eq!(p[0], 0.634_355_682_844_563_6, epsilon = 1e-12);
        assert!(p.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn empty_or_nan_profile_rejected() {
        assert!(PowerDelayProfile::<f64>::new(vec![]).is_err());
        assert!(PowerDelayProfile::new(vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn single_tap_is_flat() {
        let profile = PowerDelayProfile::<f64>::flat();
        assert_eq!(profile.normalized_powers(), &[1.0]);
        let mut rng = user_rng(7, 0);
        let taps = generate_taps(&profile, &mut rng);
        let z = frequency_response(&taps, 16).unwrap();
        for zn in &z {
            assert_relative_eq!(zn.norm(), taps[0].norm(), epsilon = 1e-12);
        }
    }

    #[test]
    fn dft_small_cases() {
        let one = Complex::new(1.0, 0.0);
        for zn in frequency_response(&[one], 8).unwrap() {
            assert_relative_eq!(zn.re, 1.0);
            assert_relative_eq!(zn.im, 0.0);
        }
        let zero = Complex::new(0.0, 0.0);
        assert!(frequency_response(&[zero; 3], 5).unwrap().iter().all(|z| z.norm() == 0.0));

        let z = frequency_response(&[one, one], 4).unwrap();
        let expected = [(2.0, 0.0), (1.0, -1.0), (0.0, 0.0), (1.0, 1.0)];
        for (got, (re, im)) in z.iter().zip(expected) {
            assert_relative_eq!(got.re, re, epsilon = 1e-12);
            assert_relative_eq!(got.im, im, epsilon = 1e-12);
        }
    }

    #[test]
    fn too_many_taps() {
        let taps = vec![Complex::new(1.0f64, 0.0); 5];
        assert!(matches!(frequency_response(&taps, 4), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn table1_noise_per_subcarrier() {
        let params = SystemParams::<f64>::table1(1.0);
        let noise = params.noise_per_subcarrier();
        assert_relative_eq!(noise, 1.5625e-16, max_relative = 1e-12);
        assert_relative_eq!(10.0 * (noise * 1e3).log10(), -128.061_799_739_838_88, epsilon = 1e-9);
    }

    #[test]
    fn flat_unit_channel_scales_to_inverse_noise() {
        // taps = [1] gives |z|^2 = 1; the grid then only carries the noise scaling.
        let params = SystemParams::<f64>::table1(1.0);
        let z = frequency_response(&[Complex::new(1.0, 0.0)], params.num_subcarriers).unwrap();
        let scale = params.noise_per_subcarrier().recip();
        for zn in z {
            assert_relative_eq!(zn.norm_sqr() * scale, 6.4e15, max_relative = 1e-12);
        }
    }

    #[test]
    fn users_are_independent_and_grid_is_reproducible() {
        let params = SystemParams::<f64>::table1(1.0);
        let profile = PowerDelayProfile::table1();
        let a = snr_grid(&params, &profile, 42).unwrap();
        let b = snr_grid(&params, &profile, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.row(0), a.row(1));
        let c = snr_grid(&params, &profile, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn grid_rejects_negative_and_mismatched() {
        assert!(GainGrid::new(2, 2, vec![1.0, -1.0, 1.0, 1.0]).is_err());
        assert!(GainGrid::new(2, 2, vec![1.0; 3]).is_err());
        assert!(GainGrid::from_rows(vec![vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(0, 4, 1.0, 1.0, 1.0).is_err());
        assert!(SystemParams::new(5, 4, 1.0, 1.0, 1.0).is_err());
        assert!(SystemParams::new(2, 4, 1.0, 1.0, 0.0).is_err());
        assert!(SystemParams::new(2, 4, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn f32_grid_is_finite() {
        let params = SystemParams::<f32>::new(3, 16, 1.0, 1.0, 1.0).unwrap();
        let grid = snr_grid(&params, &PowerDelayProfile::table1(), 1).unwrap();
        assert!(grid.values().iter().all(|v| v.is_finite()));
    }
}
