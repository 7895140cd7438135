//! Variance of the limit law, by independent routes.
//!
//! Green–Kubo: `σ² = ∫v² dμ + 2 Σ_{n≥1} ∫ v·v∘Tⁿ dμ`. The correlation
//! integrals are computed either by operator quadrature
//! (`∫ v·v∘Tⁿ dμ = ∫ (Lⁿv)·v dμ`, exact branch operators required) or by
//! Monte Carlo over invariant starts. Block route: `σ² = lim n⁻¹ E[v_n²]`.

use super::operator::{TransferConfig, TransferOperator};
use super::{GridFunction, ObservableSpec, TransferError};
use crate::maps::{MapModel, MapOrder};
use rand::Rng;

/// How correlation terms are estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationMethod {
    /// `∫ (Lⁿv)·v dμ` by operator application and quadrature; deterministic.
    Quadrature,
    /// Orbit sampling over invariant starts.
    MonteCarlo { samples: u64 },
}

/// A variance estimate with its uncertainty.
#[derive(Debug, Clone)]
pub struct Sigma2Estimate {
    pub value: f64,
    /// Standard error of the estimate (0 for quadrature).
    pub std_error: f64,
    /// Correlation terms `c_0, c_1, …` (Green–Kubo only).
    pub terms: Vec<f64>,
    /// Raised when the estimate is within 3 standard errors of zero —
    /// typically σ² > 0, so this warns of a degenerate observable.
    pub degenerate: bool,
}

impl Sigma2Estimate {
    fn flag(value: f64, std_error: f64, terms: Vec<f64>) -> Self {
        let degenerate = value < 3.0 * std_error;
        Sigma2Estimate { value, std_error, terms, degenerate }
    }
}

/// Green–Kubo partial sum with `n_terms` correlation terms.
pub fn green_kubo_sigma2<R: Rng>(
    map: &MapModel,
    v: &ObservableSpec,
    n_terms: usize,
    method: CorrelationMethod,
    cfg: &TransferConfig,
    rng: &mut R,
) -> Result<Sigma2Estimate, TransferError> {
    match method {
        CorrelationMethod::Quadrature => {
            let op = TransferOperator::for_map(map, cfg)?;
            let n = op.grid_segments();
            let v_grid = match &op {
                TransferOperator::Ulam(u) => u.cells_to_grid(
                    &u.centers().iter().map(|&c| v.eval(c)).collect::<Vec<_>>(),
                    n,
                ),
                _ => GridFunction::from_fn(n, |x| v.eval(x)),
            };
            let mut terms = Vec::with_capacity(n_terms + 1);
            terms.push(op.invariant_mean_grid(&v_grid.zip(&v_grid, |a, b| a * b)));
            let mut lv = v_grid.clone();
            for _ in 0..n_terms {
                lv = op.apply(&lv)?;
                terms.push(op.invariant_mean_grid(&lv.zip(&v_grid, |a, b| a * b)));
            }
            let value = terms[0] + 2.0 * terms[1..].iter().sum::<f64>();
            Ok(Sigma2Estimate::flag(value, 0.0, terms))
        }
        CorrelationMethod::MonteCarlo { samples } => {
            let m = samples as usize;
            // One orbit of length n_terms+1 per start yields every lag.
            let mut sums = vec![0.0f64; n_terms + 1];
            let mut sq = vec![0.0f64; n_terms + 1];
            let mut orbit = vec![0.0f64; n_terms + 1];
            for _ in 0..m {
                let mut x = map.sample_invariant(rng);
                for slot in orbit.iter_mut() {
                    *slot = v.eval(x);
                    x = map.sampled_step(x, rng);
                }
                let v0 = orbit[0];
                for (lag, &vn) in orbit.iter().enumerate() {
                    let prod = v0 * vn;
                    sums[lag] += prod;
                    sq[lag] += prod * prod;
                }
            }
            let mf = m as f64;
            let terms: Vec<f64> = sums.iter().map(|s| s / mf).collect();
            let ses: Vec<f64> = terms
                .iter()
                .zip(&sq)
                .map(|(&mean, &s2)| ((s2 / mf - mean * mean).max(0.0) / mf).sqrt())
                .collect();
            let value = terms[0] + 2.0 * terms[1..].iter().sum::<f64>();
            let var: f64 =
                ses[0] * ses[0] + 4.0 * ses[1..].iter().map(|s| s * s).sum::<f64>();
            Ok(Sigma2Estimate::flag(value, var.sqrt(), terms))
        }
    }
}

/// Block estimator `n⁻¹ E[v_n²]` over invariant starts.
pub fn batch_sigma2<R: Rng>(
    map: &MapModel,
    v: &ObservableSpec,
    block_len: usize,
    samples: u64,
    rng: &mut R,
) -> Sigma2Estimate {
    assert!(block_len >= 1);
    let mf = samples as f64;
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    for _ in 0..samples {
        let mut x = map.sample_invariant(rng);
        let mut s = 0.0;
        for _ in 0..block_len {
            s += v.eval(x);
            x = map.sampled_step(x, rng);
        }
        let val = s * s / block_len as f64;
        sum += val;
        sumsq += val * val;
    }
    let mean = sum / mf;
    let se = ((sumsq / mf - mean * mean).max(0.0) / mf).sqrt();
    Sigma2Estimate::flag(mean, se, Vec::new())
}

/// One row of the running-maximum moment table.
#[derive(Debug, Clone, Copy)]
pub struct MomentRow {
    pub n: usize,
    /// `‖ max_{j≤n} |v_j| ‖_q / √n`, bounded in `n` when the moment bound
    /// holds.
    pub ratio: f64,
}

/// Monte Carlo check of the running-maximum moment bound
/// `‖max_{j≤n}|v_j|‖_q ≤ C n^{1/2}` for admissible `q`.
pub fn moment_scaling_check<R: Rng>(
    map: &MapModel,
    v: &ObservableSpec,
    q: f64,
    n_grid: &[usize],
    samples: u64,
    rng: &mut R,
) -> Result<Vec<MomentRow>, TransferError> {
    assert!(q >= 1.0);
    if !map.order().admits_q(q) {
        let max = match map.order() {
            MapOrder::Supremum(p) => 2.0 * (p - 1.0),
            MapOrder::Unbounded => f64::INFINITY,
        };
        return Err(TransferError::Admissibility { q, max });
    }
    let &n_max = n_grid.iter().max().expect("nonempty n grid");
    let mut acc = vec![0.0f64; n_grid.len()];
    for _ in 0..samples {
        let mut x = map.sample_invariant(rng);
        let mut part = 0.0f64;
        let mut running_max = 0.0f64;
        let mut gi = 0usize;
        for j in 1..=n_max {
            part += v.eval(x);
            x = map.sampled_step(x, rng);
            running_max = running_max.max(part.abs());
            while gi < n_grid.len() && n_grid[gi] == j {
                acc[gi] += running_max.powf(q);
                gi += 1;
            }
        }
    }
    Ok(n_grid
        .iter()
        .zip(&acc)
        .map(|(&n, &a)| MomentRow {
            n,
            ratio: (a / samples as f64).powf(1.0 / q) / (n as f64).sqrt(),
        })
        .collect())
}
