//! Path processes on `[0, 1]`.
//!
//! `W_n` interpolates the rescaled Birkhoff sums `n^{-1/2} v_{nt}`; `X_n`
//! interpolates the normalized martingale sums against the random time grid
//! `t = V_{n,k} / V_{n,n}`; Brownian reference paths carry the limit law.
//! The time-reversal functional `g(u)(t) = u(1) − u(1−t)` links the two (it
//! is an involution and Lipschitz with constant 2 in the sup norm).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("need at least {need} values, got {got}")]
    Length { need: usize, got: usize },
    #[error("operation requires a uniform-grid path but time-change nodes are present")]
    TimeChangedPath,
    #[error("time-change nodes are invalid: {0}")]
    InvalidTimeChange(&'static str),
    #[error("total quadratic variation V_nn = {0} is not positive")]
    DegenerateVariance(f64),
}

/// Piecewise-linear path: values at `t = j/n`, or at explicit time-change
/// nodes when present.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    values: Vec<f64>,
    times: Option<Vec<f64>>,
}

impl SamplePath {
    pub fn uniform(values: Vec<f64>) -> Self {
        assert!(values.len() >= 2, "a path needs at least two nodes");
        SamplePath { values, times: None }
    }

    pub fn time_changed(values: Vec<f64>, times: Vec<f64>) -> Result<Self, PathError> {
        if times.len() != values.len() {
            return Err(PathError::InvalidTimeChange("node count mismatch"));
        }
        if times.first() != Some(&0.0) || times.last() != Some(&1.0) {
            return Err(PathError::InvalidTimeChange("times must start at 0 and end at 1"));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(PathError::InvalidTimeChange("times must be nondecreasing"));
        }
        Ok(SamplePath { values, times: Some(times) })
    }

    /// Number of segments `n`.
    pub fn segments(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    pub fn is_time_changed(&self) -> bool {
        self.times.is_some()
    }

    /// Node time of node `j`.
    pub fn node_time(&self, j: usize) -> f64 {
        match &self.times {
            Some(t) => t[j],
            None => j as f64 / self.segments() as f64,
        }
    }

    /// Interpolant value at `t ∈ [0, 1]`.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match &self.times {
            None => {
                let n = self.segments();
                let s = t * n as f64;
                let j = (s as usize).min(n - 1);
                let frac = s - j as f64;
                self.values[j] + frac * (self.values[j + 1] - self.values[j])
            }
            Some(times) => {
                // index of the last node with time ≤ t
                let idx = times.partition_point(|&x| x <= t);
                if idx == times.len() {
                    return *self.values.last().unwrap();
                }
                let k = idx.saturating_sub(1);
                let (t0, t1) = (times[k], times[k + 1]);
                if t1 <= t0 {
                    return self.values[k + 1];
                }
                let frac = (t - t0) / (t1 - t0);
                self.values[k] + frac * (self.values[k + 1] - self.values[k])
            }
        }
    }

    /// Exact sup distance between two interpolants (attained at a node time
    /// of one of the paths; both are evaluated on the merged node set).
    pub fn sup_distance(&self, other: &SamplePath) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..=self.segments() {
            let t = self.node_time(j);
            worst = worst.max((self.eval(t) - other.eval(t)).abs());
        }
        for j in 0..=other.segments() {
            let t = other.node_time(j);
            worst = worst.max((self.eval(t) - other.eval(t)).abs());
        }
        worst
    }

    /// All functionals are exact for the piecewise-linear interpolant.
    pub fn functionals(&self, time_grid: &[f64]) -> PathFunctionals {
        let mut sup = f64::NEG_INFINITY;
        let mut inf = f64::INFINITY;
        for &v in &self.values {
            sup = sup.max(v);
            inf = inf.min(v);
        }
        let mut integral = 0.0;
        for j in 0..self.segments() {
            let dt = self.node_time(j + 1) - self.node_time(j);
            integral += 0.5 * dt * (self.values[j] + self.values[j + 1]);
        }
        PathFunctionals {
            terminal: *self.values.last().unwrap(),
            sup,
            inf,
            sup_abs: sup.abs().max(inf.abs()),
            integral,
            at_times: time_grid.iter().map(|&t| self.eval(t)).collect(),
        }
    }
}

/// Record of exact path functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFunctionals {
    pub terminal: f64,
    pub sup: f64,
    pub inf: f64,
    pub sup_abs: f64,
    pub integral: f64,
    pub at_times: Vec<f64>,
}

/// `W_n(j/n) = n^{-1/2} Σ_{i<j} v_i`, linearly interpolated.
pub fn build_wn(vvalues: &[f64], n: usize) -> Result<SamplePath, PathError> {
    if vvalues.len() < n {
        return Err(PathError::Length { need: n, got: vvalues.len() });
    }
    let scale = (n as f64).sqrt().recip();
    let mut nodes = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    nodes.push(acc);
    for &v in &vvalues[..n] {
        acc += scale * v;
        nodes.push(acc);
    }
    Ok(SamplePath::uniform(nodes))
}

/// Result of assembling the time-changed martingale path.
#[derive(Debug, Clone)]
pub struct XnBuild {
    pub path: SamplePath,
    /// Total magnitude of negative `V` increments clamped to zero (exactly
    /// zero for the theoretical profile; tiny for Ulam-based ones).
    pub clamped: f64,
}

/// `X_n` at node `k` has value `Σ_{j≤k} n^{-1/2} σ^{-1} m_j` and sits at time
/// `V_{n,k}/V_{n,n}`. The `mvalues` are expected in reversed-time order, the
/// convention of the martingale difference array.
pub fn build_xn(mvalues: &[f64], vnk: &[f64], sigma: f64) -> Result<XnBuild, PathError> {
    let n = mvalues.len();
    if vnk.len() != n + 1 {
        return Err(PathError::Length { need: n + 1, got: vnk.len() });
    }
    assert!(sigma > 0.0, "sigma must be positive");
    // clamp negative increments, tracking the total clamp magnitude
    let mut clamped = 0.0f64;
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0f64);
    for k in 1..=n {
        let inc = vnk[k] - vnk[k - 1];
        if inc < 0.0 {
            clamped += -inc;
            cum.push(cum[k - 1]);
        } else {
            cum.push(cum[k - 1] + inc);
        }
    }
    let total = cum[n];
    if total <= 0.0 {
        return Err(PathError::DegenerateVariance(total));
    }
    let times: Vec<f64> = cum.iter().map(|&c| (c / total).clamp(0.0, 1.0)).collect();
    let scale = (n as f64).sqrt().recip() / sigma;
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    values.push(acc);
    for &m in mvalues {
        acc += scale * m;
        values.push(acc);
    }
    let path = SamplePath::time_changed(values, times)?;
    Ok(XnBuild { path, clamped })
}

/// Time reversal `g(u)(t) = u(1) − u(1−t)`, exact at nodes on the symmetric
/// uniform grid. `g∘g = id` and `Lip g ≤ 2`.
pub fn time_reverse_g(u: &SamplePath) -> Result<SamplePath, PathError> {
    if u.is_time_changed() {
        return Err(PathError::TimeChangedPath);
    }
    let n = u.segments();
    let last = u.values[n];
    let values = (0..=n).map(|j| last - u.values[n - j]).collect();
    Ok(SamplePath::uniform(values))
}

/// Brownian path with variance `σ²`: node `j` is the partial sum of i.i.d.
/// `N(0, σ²/n)` increments.
pub fn brownian_path<R: Rng>(sigma2: f64, n: usize, rng: &mut R) -> SamplePath {
    assert!(sigma2 >= 0.0);
    let dt = 1.0 / n as f64;
    let scale = (sigma2 * dt).sqrt();
    let mut nodes = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    nodes.push(acc);
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        acc += scale * z;
        nodes.push(acc);
    }
    SamplePath::uniform(nodes)
}

/// `P(sup_{[0,1]} W ≥ a) = 2 P(W(1) ≥ a) = erfc(a / √(2σ²))` by the
/// reflection principle.
pub fn brownian_sup_tail(a: f64, sigma2: f64) -> f64 {
    assert!(a >= 0.0 && sigma2 > 0.0);
    erfc(a / (2.0 * sigma2).sqrt())
}

/// A seeded collection of paths with its generation metadata; regeneration
/// from `(descriptor, master_seed)` is bit-identical because every path is
/// produced from the derived stream `(master_seed, descriptor-tag, index)`.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub paths: Vec<SamplePath>,
    pub descriptor: String,
    pub master_seed: u64,
}

impl PathEnsemble {
    /// Generate `m` paths in parallel with per-index derived streams.
    /// Collection order is the index order, so the result does not depend on
    /// the worker count.
    pub fn generate(
        m: usize,
        descriptor: &str,
        master_seed: u64,
        gen: impl Fn(usize, &mut crate::rng::Stream) -> SamplePath + Sync,
    ) -> Self {
        use rayon::prelude::*;
        let paths: Vec<SamplePath> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut rng = crate::rng::stream(master_seed, descriptor, i as u64);
                gen(i, &mut rng)
            })
            .collect();
        PathEnsemble { paths, descriptor: descriptor.to_string(), master_seed }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// CSV export: `path_id,node_index,t,value`.
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "path_id,node_index,t,value")?;
        for (id, p) in self.paths.iter().enumerate() {
            for j in 0..=p.segments() {
                writeln!(w, "{id},{j},{},{}", p.node_time(j), p.values()[j])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapModel;
    use crate::rng::stream;
    use crate::transfer::{gordin_decompose, BaseFn, TransferConfig, TransferOperator};

    #[test]
    fn wn_matches_hand_cases() {
        let p = build_wn(&[1.0, -1.0], 2).unwrap();
        assert_eq!(p.values()[0], 0.0);
        assert!((p.values()[1] - 0.5f64.sqrt()).abs() <= f64::EPSILON);
        // the two scaled increments cancel exactly
        assert_eq!(p.values()[2], 0.0);
        let z = build_wn(&[0.0; 8], 8).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let c = build_wn(&[0.3; 16], 16).unwrap();
        assert!((c.values()[16] - 0.3 * 4.0).abs() < 1e-12);
        assert!(matches!(build_wn(&[1.0], 2), Err(PathError::Length { .. })));
    }

    #[test]
    fn wn_is_linear_in_the_observable() {
        let mut r = stream(2, "paths/lin", 0);
        let v: Vec<f64> = (0..64).map(|_| r.gen::<f64>() - 0.5).collect();
        let base = build_wn(&v, 64).unwrap();
        // dyadic scalars commute with the accumulation exactly
        for alpha in [2.0f64, 0.5, -4.0] {
            let scaled: Vec<f64> = v.iter().map(|x| alpha * x).collect();
            let p = build_wn(&scaled, 64).unwrap();
            let expect: Vec<f64> = base.values().iter().map(|x| alpha * x).collect();
            assert_eq!(p.values(), expect.as_slice());
        }
        // general scalars agree to rounding
        let alpha = 3.0f64;
        let scaled: Vec<f64> = v.iter().map(|x| alpha * x).collect();
        let p = build_wn(&scaled, 64).unwrap();
        for (a, b) in p.values().iter().zip(base.values()) {
            assert!((a - alpha * b).abs() < 1e-13);
        }
    }

    #[test]
    fn xn_with_identity_time_change_is_a_uniform_walk() {
        let n = 4;
        let sigma = 0.5;
        let m = [0.5, -0.5, -0.5, 0.5];
        let v: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let x = build_xn(&m, &v, sigma).unwrap();
        assert_eq!(x.clamped, 0.0);
        let w = build_wn(&m.map(|mi| mi / sigma), n).unwrap();
        assert_eq!(x.path.values(), w.values());
        for j in 0..=n {
            assert_eq!(x.path.node_time(j), j as f64 / n as f64);
        }
    }

    #[test]
    fn xn_single_step_is_the_unit_ramp() {
        let x = build_xn(&[0.7], &[0.0, 1.0], 0.7).unwrap();
        assert_eq!(x.path.values(), &[0.0, 1.0]);
        assert_eq!(x.path.times().unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn xn_terminal_value_is_the_scaled_sum() {
        let mut r = stream(3, "paths/xn", 0);
        let m: Vec<f64> = (0..128).map(|_| r.gen::<f64>() - 0.5).collect();
        let mut v = vec![0.0f64];
        for k in 1..=128 {
            v.push(k as f64 / 128.0);
        }
        let sigma = 2.0;
        let x = build_xn(&m, &v, sigma).unwrap();
        let scale = (128f64).sqrt().recip() / sigma;
        let expect = m.iter().fold(0.0f64, |acc, &mi| acc + scale * mi);
        assert_eq!(*x.path.values().last().unwrap(), expect);
    }

    #[test]
    fn xn_clamps_negative_increments_and_reports_them() {
        let m = [1.0, 1.0, 1.0];
        let v = [0.0, 0.5, 0.4, 1.0];
        let x = build_xn(&m, &v, 1.0).unwrap();
        assert!((x.clamped - 0.1).abs() < 1e-15);
        let times = x.path.times().unwrap();
        assert!(times.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(times[0], 0.0);
        assert_eq!(times[3], 1.0);
        // degenerate total
        let err = build_xn(&[1.0], &[0.0, -1.0], 1.0);
        assert!(matches!(err, Err(PathError::DegenerateVariance(_))));
    }

    #[test]
    fn xn_terminal_variance_is_normalized() {
        // doubling, v = cos2πx (m = v): Var X_n(1) → 1.
        let map = MapModel::Doubling;
        let cfg = TransferConfig::default();
        let v = TransferOperator::for_map(&map, &cfg)
            .unwrap()
            .center_observable(BaseFn::Cos2Pi, 1.0);
        let dec = gordin_decompose(&map, &v, 1, &cfg).unwrap();
        let sigma = dec.sigma2_m.sqrt();
        let n = 256;
        let trials = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..trials {
            let mut r = stream(77, "paths/xnvar", i);
            let orbit = map.sample_orbit(n, &mut r);
            let mvals: Vec<f64> = orbit.iter().rev().map(|&y| dec.m(y)).collect();
            let scale = (n as f64).sqrt().recip() / sigma;
            let x1: f64 = mvals.iter().map(|&m| scale * m).sum();
            sum += x1;
            sumsq += x1 * x1;
        }
        let mean = sum / trials as f64;
        let var = sumsq / trials as f64 - mean * mean;
        let se = (2.0f64 / trials as f64).sqrt(); // SE of a unit variance
        assert!((var - 1.0).abs() <= 3.0 * se, "var {var}");
    }

    #[test]
    fn g_is_an_involution_and_reverses_hand_cases() {
        let ramp = SamplePath::uniform(vec![0.0, 0.5, 1.0]);
        let g = time_reverse_g(&ramp).unwrap();
        assert_eq!(g.values(), ramp.values());
        let tent = SamplePath::uniform(vec![0.0, 1.0, 0.0]);
        let g = time_reverse_g(&tent).unwrap();
        assert_eq!(g.values(), &[0.0, -1.0, 0.0]);
        let mut r = stream(4, "paths/g", 0);
        for _ in 0..100 {
            // realistic paths start at 0; the involution is then exact up to
            // one rounding of the terminal-value subtraction per node
            let mut vals: Vec<f64> = (0..33).map(|_| r.gen::<f64>() - 0.5).collect();
            vals[0] = 0.0;
            let u = SamplePath::uniform(vals);
            let gg = time_reverse_g(&time_reverse_g(&u).unwrap()).unwrap();
            assert_eq!(gg.values()[0], u.values()[0]);
            assert_eq!(gg.values()[32], u.values()[32]);
            for (a, b) in gg.values().iter().zip(u.values()) {
                assert!((a - b).abs() <= f64::EPSILON);
            }
        }
    }

    #[test]
    fn g_rejects_time_changed_paths_and_is_lipschitz_2() {
        let tc = SamplePath::time_changed(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(time_reverse_g(&tc), Err(PathError::TimeChangedPath)));
        let mut r = stream(5, "paths/lip", 0);
        for _ in 0..1000 {
            let a: Vec<f64> = (0..17).map(|_| r.gen::<f64>()).collect();
            let b: Vec<f64> = (0..17).map(|_| r.gen::<f64>()).collect();
            let (u, w) = (SamplePath::uniform(a), SamplePath::uniform(b));
            let (gu, gw) = (time_reverse_g(&u).unwrap(), time_reverse_g(&w).unwrap());
            assert!(gu.sup_distance(&gw) <= 2.0 * u.sup_distance(&w) + 1e-15);
        }
    }

    #[test]
    fn brownian_moments_match_the_law() {
        let n = 1 << 10;
        let trials = 100_000u64;
        let (mut v1, mut v1sq, mut cov) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..trials {
            let mut r = stream(6, "paths/bm", i);
            let p = brownian_path(1.0, n, &mut r);
            let (half, one) = (p.eval(0.5), p.eval(1.0));
            v1 += one;
            v1sq += one * one;
            cov += half * one;
        }
        let mf = trials as f64;
        let var = v1sq / mf - (v1 / mf) * (v1 / mf);
        let se_var = (2.0f64 / mf).sqrt();
        assert!((var - 1.0).abs() <= 3.0 * se_var, "Var W(1) = {var}");
        // Cov(W(1/2), W(1)) = 1/2; its MC standard error is ≈ sqrt(3/2/M)
        let c = cov / mf;
        assert!((c - 0.5).abs() <= 3.0 * (1.5f64 / mf).sqrt(), "Cov = {c}");
    }

    #[test]
    fn brownian_scaling_is_exact_for_dyadic_variance() {
        let mut a = stream(7, "paths/scale", 0);
        let mut b = stream(7, "paths/scale", 0);
        let p = brownian_path(0.25, 64, &mut a);
        let unit = brownian_path(1.0, 64, &mut b);
        for (x, u) in p.values().iter().zip(unit.values()) {
            assert_eq!(*x, 0.5 * u);
        }
        let zero = brownian_path(0.0, 16, &mut a);
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sup_tail_matches_reference_values() {
        assert!((brownian_sup_tail(0.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((brownian_sup_tail(1.0, 1.0) - 0.31731).abs() < 1e-5);
        assert!((brownian_sup_tail(3.0, 1.0) - 0.0026998).abs() < 1e-7);
        // scale invariance: a = σ
        assert!((brownian_sup_tail(0.5, 0.25) - 0.31731).abs() < 1e-5);
    }

    #[test]
    fn functionals_are_exact_for_hand_paths() {
        let zero = SamplePath::uniform(vec![0.0; 5]);
        let f = zero.functionals(&[0.3, 0.9]);
        assert_eq!(f.terminal, 0.0);
        assert_eq!(f.sup, 0.0);
        assert_eq!(f.integral, 0.0);
        assert_eq!(f.at_times, vec![0.0, 0.0]);

        let ramp = SamplePath::uniform(vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let f = ramp.functionals(&[0.5]);
        assert_eq!(f.sup, 1.0);
        assert!((f.integral - 0.5).abs() < 1e-15);
        assert_eq!(f.at_times[0], 0.5);

        let tent = SamplePath::uniform(vec![0.0, 1.0, 0.0]);
        let f = tent.functionals(&[]);
        assert_eq!(f.sup, 1.0);
        assert!((f.integral - 0.5).abs() < 1e-15);
        assert_eq!(f.inf, 0.0);

        let dip = SamplePath::uniform(vec![0.0, -2.0, 0.0]);
        let f = dip.functionals(&[]);
        assert_eq!(f.sup_abs, 2.0);
        assert_eq!(f.inf, -2.0);
    }

    #[test]
    fn time_changed_eval_handles_flat_segments() {
        let p = SamplePath::time_changed(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(p.eval(0.25), 0.5);
        assert_eq!(p.eval(0.5), 1.0);
        let flat =
            SamplePath::time_changed(vec![0.0, 1.0, 2.0], vec![0.0, 0.0, 1.0]).unwrap();
        // the zero-width first segment is skipped
        assert_eq!(flat.eval(0.0), 1.0);
        assert_eq!(flat.eval(0.5), 1.5);
    }

    #[test]
    fn ensembles_regenerate_bit_identically_and_export_csv() {
        let make = |seed| {
            PathEnsemble::generate(8, "test/ens", seed, |_i, rng| brownian_path(1.0, 16, rng))
        };
        let a = make(123);
        let b = make(123);
        for (p, q) in a.paths.iter().zip(&b.paths) {
            assert_eq!(p.values(), q.values());
        }
        let c = make(124);
        assert!(a.paths[0].values() != c.paths[0].values());
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("path_id,node_index,t,value\n"));
        assert_eq!(text.lines().count(), 1 + 8 * 17);
    }
}
