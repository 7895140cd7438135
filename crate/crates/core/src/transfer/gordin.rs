//! One-sided Gordin decomposition `v = m + χ∘T − χ` with `χ = Σ_{k≥1} L^k v`.
//!
//! `m` inherits the martingale property `E(m | T⁻¹ℬ) = (Lm)∘T = 0` up to the
//! truncation tail, since `Lm = L(v + χ) − χ·L1 = L^{K+1} v`. All operator
//! quantities derived from `m` exploit that cancellation: because every
//! preimage `y` of `x` satisfies `χ(Ty) = χ(x)`,
//!
//! `L m²  =  L(s²) − 2 χ · L(s) + χ² · L1`,  with  `s = v + χ`,
//!
//! which only ever applies `L` to smooth functions — evaluating `L` against
//! the jumpy `m` directly would smear its branch discontinuities across grid
//! cells and wreck the martingale identity at the tested tolerances.

use super::operator::{TransferConfig, TransferOperator};
use super::ulam::UlamModel;
use super::{GridFunction, ObservableSpec, TransferError};
use crate::maps::MapModel;

#[derive(Debug, Clone)]
enum Repr {
    Exact {
        chi: GridFunction,
        lm2: GridFunction,
    },
    Cells {
        ulam: UlamModel,
        chi: Vec<f64>,
        lm2: Vec<f64>,
    },
}

/// The computed decomposition with its diagnostics.
#[derive(Debug, Clone)]
pub struct GordinDecomposition {
    map: MapModel,
    observable: ObservableSpec,
    repr: Repr,
    /// χ resampled on the export grid.
    pub chi: GridFunction,
    /// `m` sampled on the export grid (reference values; `m` itself is
    /// evaluated pointwise through [`GordinDecomposition::m`]).
    pub m_nodes: GridFunction,
    /// Terms of the χ-series actually summed.
    pub truncation: usize,
    /// `∫ m² dμ`, the variance of the martingale part.
    pub sigma2_m: f64,
    /// `sup |Lm|` — how far `m` is from an exact martingale difference.
    pub martingale_residual: f64,
    /// `max over nodes |v − m − χ∘T + χ|`.
    pub coboundary_residual: f64,
    /// Observed per-step contraction factor of `|L^k v|`.
    pub contraction: f64,
    /// Truncation tail estimate `|L^K v| / (1 − λ̂)`.
    pub tail_estimate: f64,
}

impl GordinDecomposition {
    /// Pointwise `m(y) = v(y) − χ(Ty) + χ(y)`.
    pub fn m(&self, y: f64) -> f64 {
        let ty = self.map.step(y);
        self.observable.eval(y) - self.chi_at(ty) + self.chi_at(y)
    }

    /// χ in its native representation (interpolant or cell lookup).
    pub fn chi_at(&self, y: f64) -> f64 {
        match &self.repr {
            Repr::Exact { chi, .. } => chi.eval(y),
            Repr::Cells { ulam, chi, .. } => ulam.eval_cells(chi, y),
        }
    }

    /// `(L m²)(y)`.
    pub fn lm2_at(&self, y: f64) -> f64 {
        match &self.repr {
            Repr::Exact { lm2, .. } => lm2.eval(y),
            Repr::Cells { ulam, lm2, .. } => ulam.eval_cells(lm2, y),
        }
    }

    /// `g(y) = (L m²)(Ty) − σ²`, the centered conditional second moment
    /// driving the quadratic-variation profile.
    pub fn g(&self, y: f64) -> f64 {
        self.lm2_at(self.map.step(y)) - self.sigma2_m
    }

    pub fn map(&self) -> &MapModel {
        &self.map
    }

    pub fn observable(&self) -> &ObservableSpec {
        &self.observable
    }
}

/// Compute the decomposition, truncating the χ-series at `k_max` terms (for
/// the Ulam representation also when the term norm falls below
/// `cfg.term_tol`).
pub fn gordin_decompose(
    map: &MapModel,
    v: &ObservableSpec,
    k_max: usize,
    cfg: &TransferConfig,
) -> Result<GordinDecomposition, TransferError> {
    assert!(k_max >= 1);
    let op = TransferOperator::for_map(map, cfg)?;
    match op {
        TransferOperator::Ulam(ulam) => decompose_cells(map, v, k_max, cfg, ulam),
        exact => decompose_exact(map, v, k_max, cfg, exact),
    }
}

fn decompose_exact(
    map: &MapModel,
    v: &ObservableSpec,
    k_max: usize,
    cfg: &TransferConfig,
    op: TransferOperator,
) -> Result<GordinDecomposition, TransferError> {
    let n = op.grid_segments();
    let v_grid = GridFunction::from_fn(n, |x| v.eval(x));
    let mut norms = vec![v_grid.sup_norm()];
    let mut term = v_grid.clone();
    let mut chi = GridFunction::constant(n, 0.0);
    for _ in 0..k_max {
        term = op.apply(&term)?;
        chi = chi.zip(&term, |a, b| a + b);
        norms.push(term.sup_norm());
    }
    check_convergence(&norms, k_max, false, cfg.convergence_floor)?;
    let (contraction, tail_estimate) = contraction_and_tail(&norms, cfg.convergence_floor);

    let s = v_grid.zip(&chi, |a, b| a + b);
    let ls = op.apply(&s)?;
    let l1 = op.apply(&GridFunction::constant(n, 1.0))?;
    let lm = ls.zip(&chi.zip(&l1, |c, o| c * o), |a, b| a - b);
    let ls2 = op.apply(&s.map(|x| x * x))?;
    // L m² = L(s²) − 2 χ L(s) + χ² L1
    let lm2 = GridFunction::from_values(
        (0..=n)
            .map(|j| {
                let c = chi.values()[j];
                ls2.values()[j] - 2.0 * c * ls.values()[j] + c * c * l1.values()[j]
            })
            .collect(),
    );
    let sigma2_m = op.invariant_mean_grid(&lm2);

    let dec_partial = GordinDecomposition {
        map: *map,
        observable: v.clone(),
        repr: Repr::Exact { chi: chi.clone(), lm2 },
        chi: chi.clone(),
        m_nodes: GridFunction::constant(1, 0.0), // replaced below
        truncation: k_max,
        sigma2_m,
        martingale_residual: lm.sup_norm(),
        coboundary_residual: 0.0,
        contraction,
        tail_estimate,
    };
    finish(dec_partial, cfg.grid)
}

fn decompose_cells(
    map: &MapModel,
    v: &ObservableSpec,
    k_max: usize,
    cfg: &TransferConfig,
    ulam: UlamModel,
) -> Result<GordinDecomposition, TransferError> {
    let cells = ulam.cells();
    let v_cells: Vec<f64> = ulam.centers().iter().map(|&c| v.eval(c)).collect();
    let mut norms = vec![sup(&v_cells)];
    let mut term = v_cells.clone();
    let mut chi = vec![0.0f64; cells];
    let mut used = 0;
    let mut early = false;
    for _ in 0..k_max {
        term = ulam.apply_cells(&term);
        for (c, t) in chi.iter_mut().zip(&term) {
            *c += t;
        }
        norms.push(sup(&term));
        used += 1;
        if sup(&term) < cfg.term_tol {
            early = true;
            break;
        }
    }
    check_convergence(&norms, used, early, cfg.convergence_floor)?;
    let (contraction, tail_estimate) = contraction_and_tail(&norms, cfg.convergence_floor);

    let s: Vec<f64> = v_cells.iter().zip(&chi).map(|(a, b)| a + b).collect();
    let ls = ulam.apply_cells(&s);
    // L1 = 1 exactly for the adjoint-normalized chain.
    let lm: Vec<f64> = ls.iter().zip(&chi).map(|(a, c)| a - c).collect();
    let s2: Vec<f64> = s.iter().map(|x| x * x).collect();
    let ls2 = ulam.apply_cells(&s2);
    let lm2: Vec<f64> = (0..cells)
        .map(|i| ls2[i] - 2.0 * chi[i] * ls[i] + chi[i] * chi[i])
        .collect();
    let sigma2_m = ulam.mean_cells(&lm2);

    let chi_grid = ulam.cells_to_grid(&chi, cfg.grid);
    let martingale_residual = sup(&lm);
    let dec_partial = GordinDecomposition {
        map: *map,
        observable: v.clone(),
        repr: Repr::Cells { ulam, chi, lm2 },
        chi: chi_grid,
        m_nodes: GridFunction::constant(1, 0.0),
        truncation: used,
        sigma2_m,
        martingale_residual,
        coboundary_residual: 0.0,
        contraction,
        tail_estimate,
    };
    finish(dec_partial, cfg.grid)
}

fn finish(mut dec: GordinDecomposition, grid: usize) -> Result<GordinDecomposition, TransferError> {
    dec.m_nodes = GridFunction::from_fn(grid, |x| dec.m(x));
    // Recompute the defining identity independently of how m was stored.
    let mut worst = 0.0f64;
    for j in 0..=grid {
        let x = j as f64 / grid as f64;
        let r = dec.observable.eval(x) - dec.m(x) - dec.chi_at(dec.map.step(x)) + dec.chi_at(x);
        worst = worst.max(r.abs());
    }
    dec.coboundary_residual = worst;
    Ok(dec)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn check_convergence(
    norms: &[f64],
    used: usize,
    early_stop: bool,
    floor: f64,
) -> Result<(), TransferError> {
    if early_stop || used < 2 {
        return Ok(());
    }
    let last = norms[used];
    if last <= floor {
        return Ok(());
    }
    let reference = norms[used - used / 2];
    if last > reference / 10.0 {
        return Err(TransferError::NonConvergent { k: used, norm: last });
    }
    Ok(())
}

fn contraction_and_tail(norms: &[f64], floor: f64) -> (f64, f64) {
    let last = norms.len() - 1;
    if norms[last] == 0.0 {
        return (0.0, 0.0);
    }
    // Estimate the contraction over the decaying regime, before the norms
    // plateau at the grid-noise floor.
    let end = norms
        .iter()
        .position(|&n| n <= floor)
        .unwrap_or(last)
        .max(1);
    let lo = end.saturating_sub(5).max(1);
    let (a, b) = (norms[lo], norms[end]);
    let lambda = if a > 0.0 && end > lo {
        (b / a).powf(1.0 / (end - lo) as f64)
    } else {
        1.0
    };
    let tail = if lambda < 1.0 {
        norms[last] / (1.0 - lambda)
    } else {
        f64::INFINITY
    };
    (lambda, tail)
}

/// Quadratic-variation profile `V_{n,k}` along an orbit:
/// `V_{n,k} = k/n + σ⁻² n⁻¹ Σ_{j<k} g(y_j)` with `g = (Lm²)∘T − σ²`,
/// `V_{n,0} = 0` and `n = orbit.len()`.
pub fn vnk_profile(dec: &GordinDecomposition, orbit: &[f64]) -> Result<Vec<f64>, TransferError> {
    if dec.sigma2_m <= 0.0 {
        return Err(TransferError::DegenerateVariance(dec.sigma2_m));
    }
    let n = orbit.len();
    let scale = 1.0 / (dec.sigma2_m * n as f64);
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut run = 0.0;
    for (k, &y) in orbit.iter().enumerate() {
        run += dec.g(y);
        out.push((k + 1) as f64 / n as f64 + run * scale);
    }
    Ok(out)
}
