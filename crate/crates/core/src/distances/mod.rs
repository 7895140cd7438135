//! Statistical distances between path ensembles.
//!
//! The headline estimator is the exact Prokhorov distance between two
//! equal-size empirical measures under the sup metric. By the coupling
//! characterization, `π(P, Q) ≤ ε` for uniform empirical measures on `m`
//! atoms each iff the bipartite graph joining atoms within distance `ε`
//! admits a matching of size `≥ m − floor(εm)`; the optimum is attained on
//! the candidate grid `{pairwise distances} ∪ {k/m}`, and feasibility is
//! monotone in `ε`, so a binary search over candidates with a maximum
//! bipartite matching per probe computes `π` exactly. Ties are resolved with
//! closed balls (`≤ ε`), matching the closed-set form of the metric's
//! definition.

mod matching;

use crate::paths::PathEnsemble;
use matching::SortedAdjacency;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error("clouds have different sizes: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("clouds have different dimensions: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty cloud")]
    Empty,
    #[error("brute force limited to m <= {max}, got {m}")]
    TooLarge { m: usize, max: usize },
    #[error("epsilon grid is empty")]
    EmptyGrid,
    #[error("delta must lie in [0, 3/4] or equal 1, got {0}")]
    BadDelta(f64),
    #[error("projection times must be strictly increasing in [0, 1]")]
    BadTimes,
}

/// A finite set of `d`-dimensional points under the coordinate sup norm.
#[derive(Debug, Clone)]
pub struct PointCloud {
    dim: usize,
    points: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, flat: Vec<f64>) -> Self {
        assert!(dim >= 1 && flat.len() % dim == 0);
        PointCloud { dim, points: flat }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(1, Vec::len);
        assert!(rows.iter().all(|r| r.len() == dim));
        PointCloud {
            dim,
            points: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Sup-norm distance between point `i` here and point `j` there.
    pub fn sup_dist(&self, i: usize, other: &PointCloud, j: usize) -> f64 {
        self.point(i)
            .iter()
            .zip(other.point(j))
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
    }
}

/// Evaluate every path of an ensemble at the given times (exact interpolant
/// evaluation). The sup metric on the resulting cloud lower-bounds the
/// `C[0,1]` sup metric between the paths.
pub fn project_paths(ens: &PathEnsemble, times: &[f64]) -> Result<PointCloud, DistanceError> {
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DistanceError::BadTimes);
    }
    if !times.iter().all(|&t| (0.0..=1.0).contains(&t)) {
        return Err(DistanceError::BadTimes);
    }
    let mut flat = Vec::with_capacity(ens.len() * times.len());
    for p in &ens.paths {
        for &t in times {
            flat.push(p.eval(t));
        }
    }
    Ok(PointCloud::new(times.len(), flat))
}

/// One computed distance with its auxiliary data.
#[derive(Debug, Clone)]
pub struct DistanceReport {
    pub estimator: String,
    pub value: f64,
    /// Matching size at the optimal threshold (Prokhorov only).
    pub matching_size: usize,
    /// Number of candidate thresholds examined.
    pub threshold_grid: usize,
    /// Standard error where applicable.
    pub std_error: Option<f64>,
}

fn pairwise(p: &PointCloud, q: &PointCloud) -> Result<(usize, Vec<f64>), DistanceError> {
    if p.len() != q.len() {
        return Err(DistanceError::SizeMismatch(p.len(), q.len()));
    }
    if p.dim() != q.dim() {
        return Err(DistanceError::DimensionMismatch(p.dim(), q.dim()));
    }
    let m = p.len();
    if m == 0 {
        return Err(DistanceError::Empty);
    }
    let mut d = vec![0.0f64; m * m];
    for i in 0..m {
        for j in 0..m {
            d[i * m + j] = p.sup_dist(i, q, j);
        }
    }
    Ok((m, d))
}

/// Exact Prokhorov distance between two equal-size empirical measures.
pub fn empirical_prokhorov(p: &PointCloud, q: &PointCloud) -> Result<DistanceReport, DistanceError> {
    let (m, dmat) = pairwise(p, q)?;
    let adj = SortedAdjacency::new(m, dmat);
    let km = |k: usize| k as f64 / m as f64;
    let mut probes = 0usize;

    // Feasibility at ε = k/m (deficit k) is monotone in k; find the least
    // feasible k.
    let mut lo = 0usize; // known infeasible below (except possibly 0)
    let mut hi = m; // k = m is always feasible (empty matching allowed)
    if adj.max_matching(km(0), m) >= m {
        probes += 1;
        return Ok(DistanceReport {
            estimator: "prokhorov".into(),
            value: 0.0,
            matching_size: m,
            threshold_grid: probes,
            std_error: None,
        });
    }
    probes += 1;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        probes += 1;
        if adj.max_matching(km(mid), m - mid) >= m - mid {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let k_star = hi;

    // The optimum lies in ((k*−1)/m, k*/m]; interior candidates are pairwise
    // distances with constant deficit k*−1.
    let deficit = k_star - 1;
    let cands = adj.distances_within(km(k_star - 1), km(k_star));
    let mut best = km(k_star);
    let mut best_match = adj.max_matching(best, m - k_star);
    probes += 1;
    let mut clo = 0usize;
    let mut chi = cands.len();
    while clo < chi {
        let mid = (clo + chi) / 2;
        probes += 1;
        let got = adj.max_matching(cands[mid], m - deficit);
        if got >= m - deficit {
            best = cands[mid];
            best_match = got;
            chi = mid;
        } else {
            clo = mid + 1;
        }
    }
    Ok(DistanceReport {
        estimator: "prokhorov".into(),
        value: best,
        matching_size: best_match,
        threshold_grid: probes,
        std_error: None,
    })
}

const BRUTE_FORCE_MAX: usize = 8;

/// Test oracle: exhausts all permutations over the full candidate grid.
pub fn brute_force_prokhorov(
    p: &PointCloud,
    q: &PointCloud,
) -> Result<DistanceReport, DistanceError> {
    let (m, dmat) = pairwise(p, q)?;
    if m > BRUTE_FORCE_MAX {
        return Err(DistanceError::TooLarge { m, max: BRUTE_FORCE_MAX });
    }
    let mut candidates: Vec<f64> = dmat.clone();
    candidates.extend((0..=m).map(|k| k as f64 / m as f64));
    candidates.sort_unstable_by(f64::total_cmp);
    candidates.dedup();
    let km: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();

    let mut perm: Vec<usize> = (0..m).collect();
    for &eps in &candidates {
        // deficit = #{k ≥ 1 : k/m ≤ eps}, decided by direct comparison
        let deficit = km[1..].partition_point(|&v| v <= eps);
        let mut feasible = false;
        permute(&mut perm, 0, &mut |sigma: &[usize]| {
            let violations = sigma
                .iter()
                .enumerate()
                .filter(|&(i, &j)| dmat[i * m + j] > eps)
                .count();
            if violations <= deficit {
                feasible = true;
            }
            feasible
        });
        if feasible {
            return Ok(DistanceReport {
                estimator: "prokhorov-brute".into(),
                value: eps,
                matching_size: m - deficit.min(m),
                threshold_grid: candidates.len(),
                std_error: None,
            });
        }
    }
    unreachable!("eps = 1 is always feasible");
}

/// Heap's algorithm; `visit` returns true to stop early.
fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize]) -> bool) -> bool {
    if k == perm.len() {
        return visit(perm);
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        if permute(perm, k + 1, visit) {
            perm.swap(k, i);
            return true;
        }
        perm.swap(k, i);
    }
    false
}

/// CDF of `N(0, var)`, the CLT reference law.
pub fn normal_cdf(x: f64, var: f64) -> f64 {
    assert!(var > 0.0);
    0.5 * statrs::function::erf::erfc(-x / (2.0 * var).sqrt())
}

/// Two-sided Kolmogorov distance between a sample and a reference CDF.
pub fn kolmogorov_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!samples.is_empty());
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    let m = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / m).abs());
        d = d.max(((i + 1) as f64 / m - f).abs());
    }
    d
}

/// Convert an `L^q` bound `‖sup|Y−Y′|‖_q ≤ ε₀` into the Prokhorov bound
/// `π(Y, Y′) ≤ ε₀^{q/(q+1)}`.
pub fn prokhorov_bound_from_moment(eps0: f64, q: f64) -> f64 {
    assert!(eps0 > 0.0 && q >= 1.0);
    eps0.powf(q / (q + 1.0))
}

/// Martingale-CLT rate diagnostics.
///
/// `λ₁ = min_ε { ε^{1/2} + (E Σ_j |ξ_{n,j}|^{2+2δ} 1{|ξ|>ε})^{1/(3+2δ)} }`
/// and `λ₂ = min_ε { ε + P(|V_{n,n} − 1| > ε²) }`, with
/// `ξ_{n,j} = n^{-1/2} σ^{-1} m` by stationarity. The reported bound uses
/// `C = 1` and is *not* certified — the constant in the underlying theorem
/// is unknown.
#[derive(Debug, Clone)]
pub struct KubiliusDiagnostics {
    pub lambda1: f64,
    pub lambda2: f64,
    /// `λ |log λ|` with `λ = λ₁ + λ₂` and `C = 1`; diagnostic only.
    pub bound_c1: f64,
    pub argmin_eps1: f64,
    pub argmin_eps2: f64,
}

pub fn kubilius_diagnostics(
    m_orbits: &[Vec<f64>],
    vnn_samples: &[f64],
    sigma: f64,
    n: usize,
    delta: f64,
    eps_grid: &[f64],
) -> Result<KubiliusDiagnostics, DistanceError> {
    if eps_grid.is_empty() {
        return Err(DistanceError::EmptyGrid);
    }
    if !((0.0..=0.75).contains(&delta) || delta == 1.0) {
        return Err(DistanceError::BadDelta(delta));
    }
    assert!(sigma > 0.0 && n >= 1);
    let scale = 1.0 / (sigma * (n as f64).sqrt());
    let power = 2.0 + 2.0 * delta;
    let total: usize = m_orbits.iter().map(Vec::len).sum();
    let mut lambda1 = f64::INFINITY;
    let mut argmin_eps1 = eps_grid[0];
    for &eps in eps_grid {
        let mut acc = 0.0f64;
        for orbit in m_orbits {
            for &m in orbit {
                let xi = (m * scale).abs();
                if xi > eps {
                    acc += xi.powf(power);
                }
            }
        }
        let expected_sum = n as f64 * acc / total as f64;
        let val = eps.sqrt() + expected_sum.powf(1.0 / (3.0 + 2.0 * delta));
        if val < lambda1 {
            lambda1 = val;
            argmin_eps1 = eps;
        }
    }
    let mut lambda2 = f64::INFINITY;
    let mut argmin_eps2 = eps_grid[0];
    for &eps in eps_grid {
        let prob = vnn_samples
            .iter()
            .filter(|&&v| (v - 1.0).abs() > eps * eps)
            .count() as f64
            / vnn_samples.len().max(1) as f64;
        let val = eps + prob;
        if val < lambda2 {
            lambda2 = val;
            argmin_eps2 = eps;
        }
    }
    let lambda = lambda1 + lambda2;
    Ok(KubiliusDiagnostics {
        lambda1,
        lambda2,
        bound_c1: lambda * lambda.ln().abs(),
        argmin_eps1,
        argmin_eps2,
    })
}
