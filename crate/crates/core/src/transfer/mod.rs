//! Transfer operators and the martingale-coboundary decomposition.
//!
//! For the doubling and Gauss maps the invariant-measure transfer operator
//! `L` is realized by its exact branch formulas on a uniform grid; for the
//! LSV map it is realized by an Ulam discretization on a graded cell
//! partition. On top of `L` sits the one-sided Gordin decomposition
//! `v = m + χ∘T − χ` with `χ = Σ_{k≥1} L^k v`, which furnishes the
//! martingale difference `m`, the quadratic-variation profile `V_{n,k}`, and
//! the variance `σ²` by three independent routes (from `m`, Green–Kubo, and
//! block estimation).
//!
//! Conditional expectation convention, used consistently here and in the
//! diagnostics: `E(w | T⁻¹ℬ) = (Lw)∘T`.

mod gordin;
mod operator;
mod ulam;
mod variance;

pub use gordin::{gordin_decompose, vnk_profile, GordinDecomposition};
pub use operator::{TransferConfig, TransferOperator};
pub use ulam::UlamModel;
pub use variance::{
    batch_sigma2, green_kubo_sigma2, moment_scaling_check, CorrelationMethod, MomentRow,
    Sigma2Estimate,
};

use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TransferError {
    #[error("grid function has {got} segments but the operator expects {expected}")]
    GridMismatch { expected: usize, got: usize },
    #[error("decomposition did not converge: |L^K v| = {norm:.3e} after K = {k} terms")]
    NonConvergent { k: usize, norm: f64 },
    #[error("variance is degenerate (sigma^2 = {0:.3e})")]
    DegenerateVariance(f64),
    #[error("moment exponent q = {q} outside the admissible range for this map (need q < {max})")]
    Admissibility { q: f64, max: f64 },
    #[error("the Ulam discretization is only built for the LSV map")]
    UlamRequiresLsv,
    #[error("quadrature failed to reach tolerance {tol:.1e} (residual {residual:.3e})")]
    QuadratureFailure { tol: f64, residual: f64 },
}

/// Piecewise-linear function on the uniform grid `{j/N : 0 ≤ j ≤ N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    /// Wrap explicit node values (`N + 1` of them).
    pub fn from_values(values: Vec<f64>) -> Self {
        assert!(values.len() >= 2, "a grid function needs at least two nodes");
        GridFunction { values }
    }

    pub fn from_fn(segments: usize, f: impl Fn(f64) -> f64) -> Self {
        let n = segments as f64;
        GridFunction {
            values: (0..=segments).map(|j| f(j as f64 / n)).collect(),
        }
    }

    pub fn constant(segments: usize, c: f64) -> Self {
        GridFunction { values: vec![c; segments + 1] }
    }

    /// Number of segments `N` (one less than the node count).
    pub fn segments(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node_x(&self, j: usize) -> f64 {
        j as f64 / self.segments() as f64
    }

    /// Linear interpolant, clamped to `[0, 1]`. Exact at the nodes for
    /// power-of-two grids.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.segments();
        let t = (x.clamp(0.0, 1.0)) * n as f64;
        let j = (t as usize).min(n - 1);
        let frac = t - j as f64;
        self.values[j] + frac * (self.values[j + 1] - self.values[j])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Lebesgue integral of the interpolant (trapezoid rule, exact for the
    /// piecewise-linear representation).
    pub fn lebesgue_integral(&self) -> f64 {
        let n = self.segments() as f64;
        let inner: f64 = self.values[1..self.values.len() - 1].iter().sum();
        (0.5 * (self.values[0] + self.values[self.values.len() - 1]) + inner) / n
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.segments(), other.segments(), "grid sizes differ");
        GridFunction {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `(node, value)` CSV dump for offline inspection.
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "node,value")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.node_x(j), v)?;
        }
        Ok(())
    }
}

/// Named analytic base functions for observables.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseFn {
    /// `cos(2πx)`
    Cos2Pi,
    /// `x`
    Identity,
    /// `x^θ`, θ ∈ (0, 1]
    Power { theta: f64 },
    /// `c₀ + c₁x + …` (user polynomial)
    Poly(Vec<f64>),
}

impl BaseFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            BaseFn::Cos2Pi => (2.0 * std::f64::consts::PI * x).cos(),
            BaseFn::Identity => x,
            BaseFn::Power { theta } => x.powf(*theta),
            BaseFn::Poly(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck),
        }
    }

    pub fn label(&self) -> String {
        match self {
            BaseFn::Cos2Pi => "cos2pi".into(),
            BaseFn::Identity => "x".into(),
            BaseFn::Power { theta } => format!("x^{theta}"),
            BaseFn::Poly(c) => format!("poly{c:?}"),
        }
    }
}

/// A Hölder observable with its centering constant under the invariant
/// measure; `eval` returns the centered value.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSpec {
    pub base: BaseFn,
    /// Hölder exponent η ∈ (0, 1].
    pub eta: f64,
    /// Mean of the base function under μ.
    pub centering: f64,
}

impl ObservableSpec {
    pub fn new(base: BaseFn, eta: f64, centering: f64) -> Self {
        ObservableSpec { base, eta, centering }
    }

    /// The zero observable.
    pub fn zero() -> Self {
        ObservableSpec::new(BaseFn::Poly(vec![0.0]), 1.0, 0.0)
    }

    /// Centered evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.base.eval(x) - self.centering
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_function_eval_is_exact_at_nodes_and_linear_between() {
        let f = GridFunction::from_fn(4096, |x| x * x - 0.3);
        for j in [0usize, 1, 17, 2048, 4095, 4096] {
            let x = j as f64 / 4096.0;
            assert_eq!(f.eval(x), f.values()[j]);
        }
        // midpoint of a cell interpolates the cell endpoints
        let x = (100.5) / 4096.0;
        let expect = 0.5 * (f.values()[100] + f.values()[101]);
        assert!((f.eval(x) - expect).abs() < 1e-15);
        // clamping
        assert_eq!(f.eval(-1.0), f.values()[0]);
        assert_eq!(f.eval(2.0), f.values()[4096]);
    }

    #[test]
    fn trapezoid_is_exact_for_the_interpolant() {
        let f = GridFunction::from_values(vec![0.0, 1.0, 0.0]);
        assert!((f.lebesgue_integral() - 0.5).abs() < 1e-15);
        let g = GridFunction::from_fn(8, |x| 2.0 * x);
        assert!((g.lebesgue_integral() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn base_functions_evaluate() {
        assert!((BaseFn::Cos2Pi.eval(0.5) + 1.0).abs() < 1e-15);
        assert_eq!(BaseFn::Identity.eval(0.3), 0.3);
        assert!((BaseFn::Power { theta: 0.5 }.eval(0.25) - 0.5).abs() < 1e-15);
        let p = BaseFn::Poly(vec![1.0, -2.0, 3.0]);
        assert!((p.eval(2.0) - (1.0 - 4.0 + 12.0)).abs() < 1e-12);
        assert_eq!(ObservableSpec::zero().eval(0.77), 0.0);
    }
}
