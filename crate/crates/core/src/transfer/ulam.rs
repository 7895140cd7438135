//! Ulam discretization of the LSV transfer operator.
//!
//! The unit interval is partitioned into cells graded geometrically toward 0
//! (cell widths proportional to the distance to 0), because the invariant
//! density blows up like `x^{−γ}` at the neutral fixed point. Transition
//! weights use the image-overlap rule: for cell `i` with image interval
//! `T(cell_i)`, the weight to cell `j` is `|T(cell_i) ∩ cell_j| / |T(cell_i)|`,
//! which is exact when `T` is affine on the cell and keeps every row summing
//! to one by construction (both branches of the LSV map are monotone and a
//! boundary is pinned at 1/2, so no cell straddles the branch cut).
//!
//! The invariant cell masses `π` are the leading left fixed vector of the
//! transition matrix, obtained by power iteration. The operator on cell
//! functions is the adjoint of the chain with respect to `π`, normalized by
//! the computed image mass so that `L1 = 1` holds exactly:
//! `(LF)_j = Σ_i π_i Q_{ij} F_i / (πQ)_j`.

use super::{GridFunction, TransferError};
use crate::maps::MapModel;
use std::io::{self, Write};

/// Stop power iteration once the relative sup-norm update falls below this.
const STATIONARY_TOL: f64 = 1e-12;
const MAX_POWER_ITERS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct UlamModel {
    boundaries: Vec<f64>,
    centers: Vec<f64>,
    /// Forward chain, row-compressed: `rows[i]` lists `(j, Q_ij)`.
    rows: Vec<Vec<(u32, f64)>>,
    /// Adjoint rows: `reverse[j]` lists `(i, π_i Q_ij / (πQ)_j)`.
    reverse: Vec<Vec<(u32, f64)>>,
    mass: Vec<f64>,
    iterations: usize,
    residual: f64,
}

impl UlamModel {
    /// Build the discretization for an LSV map.
    pub fn build(map: &MapModel, cells: usize, xmin: f64) -> Result<Self, TransferError> {
        let gamma = match map {
            MapModel::Lsv { gamma } => *gamma,
            _ => return Err(TransferError::UlamRequiresLsv),
        };
        assert!(cells >= 16, "Ulam needs a nontrivial cell count");
        assert!(xmin > 0.0 && xmin < 0.25);

        // Geometric boundaries xmin → 1, with 0 prepended and the nearest
        // boundary snapped to the branch cut at 1/2.
        let mut boundaries = Vec::with_capacity(cells + 1);
        boundaries.push(0.0);
        let ratio = (1.0 / xmin).ln() / (cells - 1) as f64;
        for k in 0..cells {
            boundaries.push((xmin.ln() + ratio * k as f64).exp());
        }
        boundaries[cells] = 1.0;
        let snap = boundaries
            .iter()
            .enumerate()
            .skip(1)
            .take(cells - 1)
            .min_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()))
            .map(|(k, _)| k)
            .unwrap();
        boundaries[snap] = 0.5;

        let centers: Vec<f64> = (0..cells)
            .map(|i| 0.5 * (boundaries[i] + boundaries[i + 1]))
            .collect();

        // Left branch evaluated directly so the endpoint 1/2 maps to 1
        // (MapModel::step would dispatch 1/2 to the right branch).
        let left = |x: f64| x * (1.0 + (2.0 * x).powf(gamma));
        let image = |x: f64| if x <= 0.5 { left(x) } else { 2.0 * x - 1.0 };

        let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(cells);
        for i in 0..cells {
            let (lo, hi) = (boundaries[i], boundaries[i + 1]);
            let (mut tlo, mut thi) = if hi <= 0.5 {
                (image(lo), image(hi))
            } else {
                (2.0 * lo - 1.0, 2.0 * hi - 1.0)
            };
            tlo = tlo.clamp(0.0, 1.0);
            thi = thi.clamp(0.0, 1.0);
            let width = thi - tlo;
            let mut row = Vec::new();
            if width <= 0.0 {
                // Degenerate image: dump the mass into the containing cell.
                row.push((cell_of(&boundaries, tlo) as u32, 1.0));
            } else {
                let mut j = cell_of(&boundaries, tlo);
                let mut p = tlo;
                while p < thi && j < cells {
                    let q = boundaries[j + 1].min(thi);
                    if q > p {
                        row.push((j as u32, (q - p) / width));
                    }
                    p = q;
                    j += 1;
                }
                let sum: f64 = row.iter().map(|(_, w)| w).sum();
                for (_, w) in row.iter_mut() {
                    *w /= sum;
                }
            }
            rows.push(row);
        }

        // Stationary masses by power iteration from Lebesgue cell widths.
        let mut pi: Vec<f64> = (0..cells)
            .map(|i| boundaries[i + 1] - boundaries[i])
            .collect();
        let mut iterations = 0;
        let mut residual = f64::INFINITY;
        let mut next = vec![0.0f64; cells];
        while iterations < MAX_POWER_ITERS {
            next.iter_mut().for_each(|v| *v = 0.0);
            for (i, row) in rows.iter().enumerate() {
                let pi_i = pi[i];
                for &(j, w) in row {
                    next[j as usize] += pi_i * w;
                }
            }
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|v| *v /= total);
            residual = pi
                .iter()
                .zip(&next)
                .fold(0.0f64, |a, (&old, &new)| a.max((new - old).abs() / new.max(1e-300)));
            std::mem::swap(&mut pi, &mut next);
            iterations += 1;
            if residual < STATIONARY_TOL {
                break;
            }
        }

        // Adjoint rows normalized by the computed image mass.
        let mut denom = vec![0.0f64; cells];
        for (i, row) in rows.iter().enumerate() {
            for &(j, w) in row {
                denom[j as usize] += pi[i] * w;
            }
        }
        let mut reverse: Vec<Vec<(u32, f64)>> = vec![Vec::new(); cells];
        for (i, row) in rows.iter().enumerate() {
            for &(j, w) in row {
                let d = denom[j as usize];
                if d > 0.0 {
                    reverse[j as usize].push((i as u32, pi[i] * w / d));
                }
            }
        }

        Ok(UlamModel {
            boundaries,
            centers,
            rows,
            reverse,
            mass: pi,
            iterations,
            residual,
        })
    }

    pub fn cells(&self) -> usize {
        self.centers.len()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Invariant cell masses (sum to 1).
    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn power_iterations(&self) -> usize {
        self.iterations
    }

    pub fn stationary_residual(&self) -> f64 {
        self.residual
    }

    pub fn cell_index(&self, x: f64) -> usize {
        cell_of(&self.boundaries, x)
    }

    /// Invariant density estimate at `x` (cell mass over cell width).
    pub fn density_at(&self, x: f64) -> f64 {
        let i = self.cell_index(x);
        self.mass[i] / (self.boundaries[i + 1] - self.boundaries[i])
    }

    /// One application of the conditional-expectation operator to a cell
    /// function.
    pub fn apply_cells(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.cells());
        self.reverse
            .iter()
            .map(|row| row.iter().map(|&(i, w)| w * f[i as usize]).sum())
            .collect()
    }

    /// Piecewise-constant evaluation of a cell function.
    pub fn eval_cells(&self, vals: &[f64], x: f64) -> f64 {
        vals[self.cell_index(x)]
    }

    /// `∫ f dμ` for a cell function.
    pub fn mean_cells(&self, vals: &[f64]) -> f64 {
        vals.iter().zip(&self.mass).map(|(&v, &m)| v * m).sum()
    }

    /// Evaluate a uniform grid function at cell centers.
    pub fn grid_to_cells(&self, f: &GridFunction) -> Vec<f64> {
        self.centers.iter().map(|&c| f.eval(c)).collect()
    }

    /// Resample a cell function onto a uniform grid (piecewise constant).
    pub fn cells_to_grid(&self, vals: &[f64], segments: usize) -> GridFunction {
        GridFunction::from_fn(segments, |x| self.eval_cells(vals, x))
    }

    /// Max deviation of forward row sums from 1 (diagnostic).
    pub fn row_sum_defect(&self) -> f64 {
        self.rows
            .iter()
            .map(|row| (row.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `(cell center, invariant density)` CSV dump.
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "node,value")?;
        for i in 0..self.cells() {
            writeln!(
                w,
                "{},{}",
                self.centers[i],
                self.mass[i] / (self.boundaries[i + 1] - self.boundaries[i])
            )?;
        }
        Ok(())
    }
}

fn cell_of(boundaries: &[f64], x: f64) -> usize {
    let cells = boundaries.len() - 1;
    boundaries[1..]
        .partition_point(|&b| b <= x)
        .min(cells - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn model(gamma: f64, cells: usize) -> UlamModel {
        UlamModel::build(&MapModel::lsv(gamma).unwrap(), cells, 1e-6).unwrap()
    }

    #[test]
    fn rows_are_stochastic_and_boundaries_cover_the_interval() {
        let u = model(0.25, 1 << 12);
        assert!(u.row_sum_defect() < 1e-12);
        assert_eq!(u.boundaries()[0], 0.0);
        assert_eq!(*u.boundaries().last().unwrap(), 1.0);
        assert!(u.boundaries().contains(&0.5));
        assert!(u.boundaries().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn stationary_masses_are_a_probability_vector() {
        let u = model(0.25, 1 << 12);
        let total: f64 = u.masses().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(u.masses().iter().all(|&m| m >= 0.0));
        assert!(u.stationary_residual() < 1e-10, "{}", u.stationary_residual());
    }

    #[test]
    fn l1_is_exactly_one() {
        let u = model(0.3, 1 << 12);
        let ones = vec![1.0; u.cells()];
        let lones = u.apply_cells(&ones);
        let err = lones.iter().fold(0.0f64, |a, &v| a.max((v - 1.0).abs()));
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn density_diverges_at_zero_like_x_to_minus_gamma() {
        let u = model(0.25, 1 << 12);
        // density ratio between x and 10x should approach 10^γ ≈ 1.78
        let r = u.density_at(1e-4) / u.density_at(1e-3);
        assert!(r > 1.3 && r < 2.5, "ratio {r}");
        assert!(u.density_at(1e-4) > u.density_at(0.9));
    }

    #[test]
    fn ulam_only_builds_for_lsv() {
        assert!(matches!(
            UlamModel::build(&MapModel::Doubling, 64, 1e-6),
            Err(TransferError::UlamRequiresLsv)
        ));
    }

    #[test]
    fn chain_duality_matches_orbit_statistics() {
        // E[(Lf)(x) w(x)] = E[f(x) w(Tx)] along sampled orbits, within Ulam
        // discretization error plus Monte Carlo noise.
        let map = MapModel::lsv(0.25).unwrap();
        let u = model(0.25, 1 << 13);
        let f: Vec<f64> = u.centers().iter().map(|&c| c * c).collect();
        let lf = u.apply_cells(&f);
        let w = |x: f64| (2.0 * std::f64::consts::PI * x).cos();
        let mut r = stream(23, "ulam/duality", 0);
        let (mut lhs, mut rhs) = (0.0, 0.0);
        let n = 200_000;
        let mut x = map.sample_invariant(&mut r);
        for _ in 0..n {
            lhs += u.eval_cells(&lf, x) * w(x);
            rhs += u.eval_cells(&f, x) * w(map.step(x));
            x = map.sampled_step(x, &mut r);
        }
        let gap = ((lhs - rhs) / n as f64).abs();
        assert!(gap < 2e-2, "duality gap {gap}");
    }

    #[test]
    fn cell_lookup_handles_endpoints() {
        let u = model(0.25, 64);
        assert_eq!(u.cell_index(0.0), 0);
        assert_eq!(u.cell_index(1.0), u.cells() - 1);
        let mut r = stream(1, "ulam/lookup", 0);
        for _ in 0..1000 {
            let x: f64 = r.gen();
            let i = u.cell_index(x);
            assert!(u.boundaries()[i] <= x && x <= u.boundaries()[i + 1]);
        }
    }
}
