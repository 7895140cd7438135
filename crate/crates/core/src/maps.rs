//! Interval maps, orbits, invariant-measure sampling and return times.
//!
//! Three families are implemented on `[0, 1]`:
//!
//! * the doubling map `T(x) = 2x mod 1`,
//! * the Gauss map `T(x) = frac(1/x)` with `T(0) = 0`,
//! * the intermittent (LSV) map `T(x) = x(1 + 2^γ x^γ)` on `[0, 1/2)` and
//!   `2x − 1` on `[1/2, 1]`, with a neutral fixed point at 0.
//!
//! Orbits come in two flavours. [`MapModel::orbit`] iterates the exact map in
//! `f64`, which is the right thing for operator checks but useless for long
//! doubling orbits: `2x mod 1` sheds one significand bit per step, so every
//! double collapses to `0` within 53 iterations. Monte Carlo experiments use
//! [`MapModel::sample_orbit`] instead, whose doubling steps replenish the
//! lost bit with one fresh random bit at weight `2⁻⁵³`; statistically this
//! reproduces the Bernoulli structure of the map for arbitrary orbit lengths
//! while staying bit-reproducible under seeded streams.

use rand::Rng;
use thiserror::Error;

/// Gauss-map invariant density `1 / ((1 + x) ln 2)`.
pub fn gauss_density(x: f64) -> f64 {
    1.0 / ((1.0 + x) * std::f64::consts::LN_2)
}

/// Points below this are resampled during Gauss invariant sampling; `1/x`
/// would otherwise lose all fractional precision.
pub const GAUSS_TINY: f64 = 1e-15;

/// Default burn-in for LSV invariant sampling. Correlations decay like
/// `n^{1−1/γ}`, so 10³ iterations are adequate for γ ≤ 0.4 at the tested
/// tolerances.
pub const LSV_DEFAULT_BURNIN: usize = 1_000;

/// Default cap for first-return searches; `P(τ > 10⁸)` is negligible for all
/// γ < 1/2.
pub const RETURN_TIME_CAP: u64 = 100_000_000;

/// Largest orbit materialized in memory by [`MapModel::orbit`]; longer runs
/// must use the streaming iterator.
pub const MAX_ORBIT_LEN: usize = 1 << 26;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("LSV parameter gamma must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("orbit of length {n} exceeds the in-memory budget {max}; use orbit_iter")]
    OrbitTooLong { n: usize, max: usize },
    #[error("return-time start {0} lies outside Y = [1/2, 1]")]
    InvalidStart(f64),
    #[error("no return to [1/2, 1] within cap {cap}")]
    CapExceeded { cap: u64 },
}

/// One of the implemented interval maps.
///
/// `Lsv` accepts any γ in (0, 1) — the map has a unique absolutely
/// continuous invariant measure on that whole range — but the CLT/WIP regime
/// is γ < 1/2, and rate experiments additionally require the implied order
/// `1/γ` to exceed 2; the experiment runner enforces those windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapModel {
    Doubling,
    Gauss,
    Lsv { gamma: f64 },
}

/// Order of nonuniform expansion: the supremum of admissible `p` with the
/// return time in `L^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapOrder {
    /// Return time bounded or with tails lighter than any polynomial
    /// (doubling has τ ≡ 1; the Gauss map is treated as order p for all p).
    Unbounded,
    /// Strict supremum, not attained (LSV: `1/γ`).
    Supremum(f64),
}

impl MapOrder {
    /// Whether moments of exponent `q` of running maxima are controlled,
    /// i.e. whether some admissible `p` gives `q ≤ 2(p − 1)`.
    pub fn admits_q(&self, q: f64) -> bool {
        match self {
            MapOrder::Unbounded => true,
            MapOrder::Supremum(p) => q < 2.0 * (p - 1.0),
        }
    }
}

impl MapModel {
    /// LSV map with validated parameter.
    pub fn lsv(gamma: f64) -> Result<Self, MapError> {
        if gamma > 0.0 && gamma < 1.0 {
            Ok(MapModel::Lsv { gamma })
        } else {
            Err(MapError::InvalidGamma(gamma))
        }
    }

    pub fn label(&self) -> String {
        match self {
            MapModel::Doubling => "doubling".to_string(),
            MapModel::Gauss => "gauss".to_string(),
            MapModel::Lsv { gamma } => format!("lsv(gamma={gamma})"),
        }
    }

    /// One exact map step. The doubling branch is computed as
    /// `2x − floor(2x)` rather than by bit tricks, so finite-precision orbit
    /// collapse behaves exactly as documented.
    pub fn step(&self, x: f64) -> f64 {
        match *self {
            MapModel::Doubling => {
                let y = 2.0 * x;
                y - y.floor()
            }
            MapModel::Gauss => {
                if x == 0.0 {
                    0.0
                } else {
                    let y = 1.0 / x;
                    y - y.floor()
                }
            }
            MapModel::Lsv { gamma } => {
                if x < 0.5 {
                    // x (1 + 2^γ x^γ) = x (1 + (2x)^γ)
                    x * (1.0 + (2.0 * x).powf(gamma))
                } else {
                    2.0 * x - 1.0
                }
            }
        }
    }

    pub fn order(&self) -> MapOrder {
        match *self {
            MapModel::Doubling | MapModel::Gauss => MapOrder::Unbounded,
            MapModel::Lsv { gamma } => MapOrder::Supremum(1.0 / gamma),
        }
    }

    /// Draw a point from the invariant measure with the default LSV burn-in.
    pub fn sample_invariant<R: Rng>(&self, rng: &mut R) -> f64 {
        self.sample_invariant_with(LSV_DEFAULT_BURNIN, rng)
    }

    /// Invariant sampling with explicit LSV burn-in length.
    ///
    /// Doubling: Lebesgue, exact. Gauss: inverse CDF of
    /// `F(x) = ln(1+x)/ln 2`, exact. LSV: uniform start evolved `burnin`
    /// steps, approximate.
    pub fn sample_invariant_with<R: Rng>(&self, burnin: usize, rng: &mut R) -> f64 {
        match *self {
            MapModel::Doubling => rng.gen::<f64>(),
            MapModel::Gauss => loop {
                let u: f64 = rng.gen();
                let x = u.exp2() - 1.0;
                if x >= GAUSS_TINY {
                    break x;
                }
            },
            MapModel::Lsv { .. } => {
                let mut x: f64 = rng.gen();
                for _ in 0..burnin {
                    x = self.step(x);
                }
                x
            }
        }
    }

    /// One statistically corrected step for Monte Carlo orbits.
    ///
    /// Doubling replenishes the significand bit lost per iteration with a
    /// fresh random bit at weight `2⁻⁵³` (one `u64` draw per step). The Gauss
    /// branch resamples the rare sub-`1e-15` points from the invariant law;
    /// the LSV branch nudges an exact hit of the fixed point 0 to `2⁻⁵³`.
    pub fn sampled_step<R: Rng>(&self, x: f64, rng: &mut R) -> f64 {
        match *self {
            MapModel::Doubling => {
                let mut y = self.step(x) + (rng.gen::<u64>() & 1) as f64 * 2f64.powi(-53);
                if y >= 1.0 {
                    y -= 1.0;
                }
                y
            }
            MapModel::Gauss => {
                let y = self.step(x);
                if y < GAUSS_TINY {
                    self.sample_invariant(rng)
                } else {
                    y
                }
            }
            MapModel::Lsv { .. } => {
                let y = self.step(x);
                if y == 0.0 {
                    2f64.powi(-53)
                } else {
                    y
                }
            }
        }
    }

    /// Orbit of length `n` for Monte Carlo use: invariant start, corrected
    /// stepping. Consumes draws in a fixed pattern per call.
    pub fn sample_orbit<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        self.sample_orbit_with(n, LSV_DEFAULT_BURNIN, rng)
    }

    pub fn sample_orbit_with<R: Rng>(&self, n: usize, burnin: usize, rng: &mut R) -> Vec<f64> {
        let mut values = Vec::with_capacity(n);
        let mut x = self.sample_invariant_with(burnin, rng);
        for _ in 0..n {
            values.push(x);
            x = self.sampled_step(x, rng);
        }
        values
    }

    /// Exact orbit `(x₀, Tx₀, …, T^{n−1}x₀)` held in memory.
    pub fn orbit(&self, x0: f64, n: usize) -> Result<OrbitBuffer, MapError> {
        if n > MAX_ORBIT_LEN {
            return Err(MapError::OrbitTooLong { n, max: MAX_ORBIT_LEN });
        }
        let mut values = Vec::with_capacity(n);
        let mut x = x0;
        for _ in 0..n {
            values.push(x);
            x = self.step(x);
        }
        Ok(OrbitBuffer { values })
    }

    /// Streaming orbit; produces exactly the values of [`MapModel::orbit`].
    pub fn orbit_iter(&self, x0: f64) -> OrbitIter {
        OrbitIter { map: *self, next: x0 }
    }

    /// First-return time of `y ∈ [1/2, 1]` to `[1/2, 1]`.
    pub fn return_time(&self, y: f64, cap: u64) -> Result<ReturnTimeSample, MapError> {
        self.return_time_impl(y, cap, false)
    }

    /// Like [`MapModel::return_time`], additionally recording the excursion
    /// itinerary (the iterates strictly between departure and return).
    pub fn return_time_recorded(&self, y: f64, cap: u64) -> Result<ReturnTimeSample, MapError> {
        self.return_time_impl(y, cap, true)
    }

    fn return_time_impl(&self, y: f64, cap: u64, record: bool) -> Result<ReturnTimeSample, MapError> {
        if !(0.5..=1.0).contains(&y) {
            return Err(MapError::InvalidStart(y));
        }
        if cap == 0 {
            return Err(MapError::CapExceeded { cap });
        }
        let mut itinerary = record.then(Vec::new);
        let mut x = self.step(y);
        let mut tau = 1u64;
        while x < 0.5 {
            if tau >= cap {
                return Err(MapError::CapExceeded { cap });
            }
            if let Some(it) = itinerary.as_mut() {
                it.push(x);
            }
            x = self.step(x);
            tau += 1;
        }
        Ok(ReturnTimeSample { start: y, tau, itinerary })
    }

    /// Survival counts of the return time over a grid of thresholds,
    /// estimated from `samples` uniform starts in `[1/2, 1]`.
    ///
    /// `grid` must be strictly increasing. Starts that fail to return within
    /// `cap` abort with [`MapError::CapExceeded`].
    pub fn return_time_tail<R: Rng>(
        &self,
        samples: u64,
        grid: &[u64],
        cap: u64,
        rng: &mut R,
    ) -> Result<TailEstimate, MapError> {
        let mut survivors = vec![0u64; grid.len()];
        for _ in 0..samples {
            let y = 0.5 + 0.5 * rng.gen::<f64>();
            let tau = self.return_time(y, cap)?.tau;
            for (slot, &n) in survivors.iter_mut().zip(grid) {
                if tau > n {
                    *slot += 1;
                }
            }
        }
        Ok(TailEstimate { grid: grid.to_vec(), survivors, samples })
    }
}

/// A materialized exact orbit.
#[derive(Debug, Clone)]
pub struct OrbitBuffer {
    values: Vec<f64>,
}

impl OrbitBuffer {
    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Streaming exact orbit.
pub struct OrbitIter {
    map: MapModel,
    next: f64,
}

impl Iterator for OrbitIter {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let x = self.next;
        self.next = self.map.step(x);
        Some(x)
    }
}

/// Outcome of a first-return search from a point of `Y = [1/2, 1]`.
#[derive(Debug, Clone)]
pub struct ReturnTimeSample {
    pub start: f64,
    pub tau: u64,
    /// Iterates strictly between departure and return, when recorded.
    pub itinerary: Option<Vec<f64>>,
}

impl ReturnTimeSample {
    pub fn itinerary_recorded(&self) -> bool {
        self.itinerary.is_some()
    }
}

/// Empirical survival counts `#{τ > n}` over a threshold grid.
#[derive(Debug, Clone)]
pub struct TailEstimate {
    pub grid: Vec<u64>,
    pub survivors: Vec<u64>,
    pub samples: u64,
}

impl TailEstimate {
    /// `(n, #{τ>n}/samples)` pairs with at least `min_survivors` hits, the
    /// input for a log-log tail fit.
    pub fn survival_pairs(&self, min_survivors: u64) -> Vec<(f64, f64)> {
        self.grid
            .iter()
            .zip(&self.survivors)
            .filter(|(_, &s)| s >= min_survivors)
            .map(|(&n, &s)| (n as f64, s as f64 / self.samples as f64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    const LSV_HALF: MapModel = MapModel::Lsv { gamma: 0.5 };

    #[test]
    fn step_matches_hand_values() {
        assert_eq!(MapModel::Doubling.step(0.3), 0.6);
        // 0.25 (1 + 2^0.5 · 0.25^0.5) = 0.25 (1 + sqrt(0.5))
        let expect = 0.25 * (1.0 + 0.5f64.sqrt());
        assert!((LSV_HALF.step(0.25) - expect).abs() < 1e-15);
        assert!((expect - 0.426_776_6).abs() < 1e-7);
        assert!((MapModel::Gauss.step(0.4) - 0.5).abs() < 1e-15);
        assert_eq!(MapModel::Gauss.step(0.0), 0.0);
    }

    #[test]
    fn step_stays_in_unit_interval() {
        let mut r = stream(9, "maps/domain", 0);
        for map in [MapModel::Doubling, MapModel::Gauss, MapModel::lsv(0.3).unwrap()] {
            for _ in 0..10_000 {
                let x: f64 = r.gen();
                let y = map.step(x);
                assert!((0.0..=1.0).contains(&y), "{map:?} step({x}) = {y}");
            }
        }
    }

    #[test]
    fn lsv_constructor_validates_gamma() {
        assert!(MapModel::lsv(0.25).is_ok());
        assert!(MapModel::lsv(0.75).is_ok());
        assert_eq!(MapModel::lsv(0.0), Err(MapError::InvalidGamma(0.0)));
        assert_eq!(MapModel::lsv(1.0), Err(MapError::InvalidGamma(1.0)));
        assert_eq!(MapModel::lsv(-0.1), Err(MapError::InvalidGamma(-0.1)));
    }

    #[test]
    fn orbits_match_hand_values() {
        let o = MapModel::Doubling.orbit(0.3, 3).unwrap();
        assert_eq!(o.values(), &[0.3, 0.6, 0.19999999999999996]);
        let o = LSV_HALF.orbit(0.75, 2).unwrap();
        assert_eq!(o.values(), &[0.75, 0.5]);
        let o = MapModel::Gauss.orbit(0.5, 2).unwrap();
        assert_eq!(o.values(), &[0.5, 0.0]);
    }

    #[test]
    fn orbit_invariant_and_streaming_agree() {
        let map = MapModel::lsv(0.3).unwrap();
        let o = map.orbit(0.123, 500).unwrap();
        for j in 0..o.len() - 1 {
            assert_eq!(o.values()[j + 1], map.step(o.values()[j]));
        }
        let streamed: Vec<f64> = map.orbit_iter(0.123).take(500).collect();
        assert_eq!(streamed, o.values());
    }

    #[test]
    fn orbit_budget_is_enforced() {
        let err = MapModel::Doubling.orbit(0.5, MAX_ORBIT_LEN + 1).unwrap_err();
        assert!(matches!(err, MapError::OrbitTooLong { .. }));
    }

    #[test]
    fn pure_doubling_orbit_collapses_but_sampled_does_not() {
        let pure = MapModel::Doubling.orbit(0.618_033_988_749_894_8, 200).unwrap();
        assert_eq!(*pure.values().last().unwrap(), 0.0);
        let mut r = stream(11, "maps/replenish", 0);
        let sampled = MapModel::Doubling.sample_orbit(200, &mut r);
        assert!(sampled[100..].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn return_times_match_hand_iteration() {
        assert_eq!(LSV_HALF.return_time(0.75, 10).unwrap().tau, 1);
        assert!(LSV_HALF.return_time(0.6, 1000).unwrap().tau >= 2);
        for map in [LSV_HALF, MapModel::lsv(0.25).unwrap()] {
            assert_eq!(map.return_time(1.0, 10).unwrap().tau, 1);
        }
        assert!(matches!(
            LSV_HALF.return_time(0.3, 10),
            Err(MapError::InvalidStart(_))
        ));
        // A deep excursion cannot return within a tiny cap.
        let deep = 0.5 + 1e-9;
        assert!(matches!(
            LSV_HALF.return_time(deep, 3),
            Err(MapError::CapExceeded { cap: 3 })
        ));
        let rec = LSV_HALF.return_time_recorded(0.6, 1000).unwrap();
        assert!(rec.itinerary_recorded());
        assert_eq!(rec.itinerary.as_ref().unwrap().len() as u64, rec.tau - 1);
        assert!(rec.itinerary.unwrap().iter().all(|&x| x < 0.5));
    }

    #[test]
    fn order_reports_supremum() {
        assert_eq!(MapModel::lsv(0.25).unwrap().order(), MapOrder::Supremum(4.0));
        assert_eq!(LSV_HALF.order(), MapOrder::Supremum(2.0));
        assert_eq!(MapModel::Doubling.order(), MapOrder::Unbounded);
        assert!(MapOrder::Unbounded.admits_q(100.0));
        assert!(MapOrder::Supremum(4.0).admits_q(4.0));
        assert!(!MapOrder::Supremum(4.0).admits_q(6.0));
    }

    #[test]
    fn gauss_inverse_cdf_hand_value() {
        // u = 0.5 maps to 2^{1/2} − 1.
        struct Half;
        impl rand::RngCore for Half {
            fn next_u32(&mut self) -> u32 {
                unimplemented!()
            }
            fn next_u64(&mut self) -> u64 {
                1 << 63
            }
            fn fill_bytes(&mut self, _: &mut [u8]) {
                unimplemented!()
            }
            fn try_fill_bytes(&mut self, d: &mut [u8]) -> Result<(), rand::Error> {
                self.fill_bytes(d);
                Ok(())
            }
        }
        let x = MapModel::Gauss.sample_invariant(&mut Half);
        assert!((x - (2f64.sqrt() - 1.0)).abs() < 1e-12, "{x}");
    }

    #[test]
    fn doubling_invariant_sampling_is_uniform_passthrough() {
        let mut a = stream(3, "maps/unif", 0);
        let mut b = stream(3, "maps/unif", 0);
        let x = MapModel::Doubling.sample_invariant(&mut a);
        assert_eq!(x, b.gen::<f64>());
    }

    #[test]
    fn identical_seeds_give_identical_orbits_and_samples() {
        for map in [MapModel::Doubling, MapModel::Gauss, MapModel::lsv(0.25).unwrap()] {
            let mut a = stream(7, "maps/det", 1);
            let mut b = stream(7, "maps/det", 1);
            assert_eq!(map.sample_orbit(256, &mut a), map.sample_orbit(256, &mut b));
        }
    }

    #[test]
    fn gauss_inverse_cdf_matches_reference_cdf() {
        // Kolmogorov distance of 10^6 samples against ln(1+x)/ln 2.
        let mut r = stream(5, "maps/gausscdf", 0);
        let mut xs: Vec<f64> = (0..1_000_000)
            .map(|_| MapModel::Gauss.sample_invariant(&mut r))
            .collect();
        xs.sort_by(f64::total_cmp);
        let m = xs.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let f = (1.0 + x).ln() / std::f64::consts::LN_2;
            d = d.max((f - i as f64 / m).abs()).max(((i + 1) as f64 / m - f).abs());
        }
        assert!(d <= 0.005, "Kolmogorov distance {d}");
    }

    #[test]
    fn lsv_invariant_density_diverges_at_zero() {
        // After burn-in, mass near 0 must dominate mass near 1 (density blows
        // up like x^{-γ} at the neutral fixed point). Checked with a Birkhoff
        // histogram along sampled orbits rather than independent burn-ins so
        // 10^6 samples stay cheap.
        let map = MapModel::lsv(0.25).unwrap();
        let mut r = stream(5, "maps/lsvhist", 1);
        let (mut low, mut high) = (0u64, 0u64);
        for _ in 0..16 {
            for x in map.sample_orbit(62_500, &mut r) {
                if x <= 0.1 {
                    low += 1;
                } else if x >= 0.9 {
                    high += 1;
                }
            }
        }
        assert!(low > high, "low {low} high {high}");
    }

    #[test]
    fn measure_preservation_along_sampled_orbits() {
        // |mean φ − mean φ∘T| over a length-10⁷ sampled orbit, for a fixed
        // suite of bounded observables.
        let suite: [fn(f64) -> f64; 3] = [
            |x| x,
            |x| (2.0 * std::f64::consts::PI * x).cos(),
            |x| if x < 0.5 { 1.0 } else { 0.0 },
        ];
        for (i, map) in [MapModel::Doubling, MapModel::Gauss, MapModel::lsv(0.25).unwrap()]
            .into_iter()
            .enumerate()
        {
            let mut r = stream(13, "maps/preserve", i as u64);
            let n = 10_000_000usize;
            let mut x = map.sample_invariant(&mut r);
            let mut sums = [0.0f64; 3];
            let mut sums_t = [0.0f64; 3];
            for _ in 0..n {
                let tx = map.step(x);
                for (k, phi) in suite.iter().enumerate() {
                    sums[k] += phi(x);
                    sums_t[k] += phi(tx);
                }
                x = map.sampled_step(x, &mut r);
            }
            for k in 0..suite.len() {
                let gap = ((sums[k] - sums_t[k]) / n as f64).abs();
                assert!(gap <= 1e-3, "{} phi#{k}: gap {gap}", map.label());
            }
        }
    }

    /// Exact tail oracle: u_k = (T|_left)^{-k}(1/2) by bisection, so that
    /// P(τ > n) = u_{n−1} for uniform starts on Y. Independent of the
    /// iteration path used by `return_time`.
    fn exact_tail(gamma: f64, n: u64) -> f64 {
        let mut u = 0.5f64;
        for _ in 0..n - 1 {
            let (mut lo, mut hi) = (0.0f64, 0.5f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid * (1.0 + (2.0 * mid).powf(gamma)) < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            u = 0.5 * (lo + hi);
        }
        u
    }

    #[test]
    fn return_time_tail_matches_exact_preimage_oracle() {
        let map = MapModel::lsv(0.5).unwrap();
        let grid = [1u64, 4, 10, 40];
        let mut r = stream(17, "maps/tail", 0);
        let est = map.return_time_tail(200_000, &grid, RETURN_TIME_CAP, &mut r).unwrap();
        for (i, &n) in grid.iter().enumerate() {
            let exact = exact_tail(0.5, n);
            let emp = est.survivors[i] as f64 / est.samples as f64;
            let se = (exact * (1.0 - exact) / est.samples as f64).sqrt();
            assert!(
                (emp - exact).abs() <= 4.0 * se + 1e-9,
                "n={n}: emp {emp} vs exact {exact} (se {se})"
            );
        }
    }

    #[test]
    fn tail_estimate_filters_thin_bins() {
        let est = TailEstimate {
            grid: vec![10, 100, 1000],
            survivors: vec![500, 30, 2],
            samples: 10_000,
        };
        let pairs = est.survival_pairs(10);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0], (10.0, 0.05));
    }
}
