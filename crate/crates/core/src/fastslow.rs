//! Fast-slow systems and their diffusion limit.
//!
//! The slow recursion
//! `x(n+1) = x(n) + ε² a_ε(x(n), y(n)) + ε b(x(n)) v(y(n))`
//! is iterated against a fast orbit `y(n)` and interpolated into a path
//! `x̂_ε ∈ C[0,1]` via `t = k ε²`. As ε → 0 the path converges to the
//! diffusion `dX = {ā(X) + b(X)b'(X) Σ} dt + b(X) dW` (Itô form; `Σ` is the
//! Green–Kubo correlation sum and `W` has variance `σ²`), which the solver
//! integrates by Euler–Maruyama. The unit-diffusion transform `ψ = ∫ dt/b`
//! reduces the general case to `b ≡ 1` with drift `Ā`.
//!
//! Drift and diffusion families are fixed named forms with certifiable
//! regularity constants:
//! `a_ε(x,y) = ā(x) + c(x) w(y) + ε^{1/3} e·sin(x) w(y)` with `w` centered,
//! so `ā(x) = ∫ a₀(x, y) dμ(y)` holds exactly by construction.

use crate::maps::MapModel;
use crate::transfer::ObservableSpec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FastSlowError {
    #[error("ε = {eps} needs {steps} steps, over the budget {budget}")]
    BudgetExceeded { eps: f64, steps: usize, budget: usize },
    #[error("fast orbit supplies {got} values but {need} steps are required")]
    OrbitTooShort { need: usize, got: usize },
    #[error("adaptive quadrature failed to reach tolerance {tol:.1e}")]
    QuadratureFailure { tol: f64 },
    #[error("diffusion coefficient must be positive, got {0}")]
    BadDiffusion(f64),
}

/// Named mean-drift forms `ā(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AbarForm {
    Zero,
    /// `ā(x) = −x` (Ornstein–Uhlenbeck drift; Lipschitz but unbounded).
    NegX,
    /// `ā(x) = amp·sin(x)`, bounded Lipschitz.
    Sin { amp: f64 },
}

impl AbarForm {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            AbarForm::Zero => 0.0,
            AbarForm::NegX => -x,
            AbarForm::Sin { amp } => amp * x.sin(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            AbarForm::Zero => 0.0,
            AbarForm::NegX => 1.0,
            AbarForm::Sin { amp } => amp.abs(),
        }
    }

    /// Sup bound, `None` when unbounded.
    pub fn sup_bound(&self) -> Option<f64> {
        match *self {
            AbarForm::Zero => Some(0.0),
            AbarForm::NegX => None,
            AbarForm::Sin { amp } => Some(amp.abs()),
        }
    }
}

/// Named couplings `c(x)` multiplying the centered fast observable in the
/// drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingForm {
    Zero,
    Constant { c: f64 },
    /// `c(x) = amp·cos(x)`.
    Cos { amp: f64 },
}

impl CouplingForm {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            CouplingForm::Zero => 0.0,
            CouplingForm::Constant { c } => c,
            CouplingForm::Cos { amp } => amp * x.cos(),
        }
    }

    pub fn sup_bound(&self) -> f64 {
        match *self {
            CouplingForm::Zero => 0.0,
            CouplingForm::Constant { c } => c.abs(),
            CouplingForm::Cos { amp } => amp.abs(),
        }
    }
}

/// The drift family `a_ε(x,y) = ā(x) + c(x) w(y) + ε^{1/3} e·sin(x) w(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftFamily {
    pub abar: AbarForm,
    pub coupling: CouplingForm,
    /// Coefficient `e` of the `ε^{1/3}` correction term.
    pub eps13_coeff: f64,
}

impl DriftFamily {
    pub fn mean_only(abar: AbarForm) -> Self {
        DriftFamily { abar, coupling: CouplingForm::Zero, eps13_coeff: 0.0 }
    }

    /// `a_ε(x, y)`; `w` is the centered drift observable evaluated at `y`.
    pub fn a_eps(&self, x: f64, w_y: f64, eps: f64) -> f64 {
        self.abar.eval(x)
            + self.coupling.eval(x) * w_y
            + eps.cbrt() * self.eps13_coeff * x.sin() * w_y
    }

    /// `a₀(x, y) − ā(x) = c(x) w(y)`, the centered fluctuation.
    pub fn a_tilde(&self, x: f64, w_y: f64) -> f64 {
        self.coupling.eval(x) * w_y
    }

    /// Declared constant in `|a_ε − a₀| ≤ C ε^{1/3}` (times `sup|w|`).
    pub fn eps13_constant(&self) -> f64 {
        self.eps13_coeff.abs()
    }
}

/// Named diffusion forms: C², nonvanishing, with `b, b', 1/b` bounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionForm {
    One,
    Constant { c: f64 },
    /// `b(x) = 2 + sin x ∈ [1, 3]`.
    TwoPlusSin,
    /// `b(x) = (1 + x²)/(1 + 2x²) ∈ [1/2, 1]`.
    RationalBump,
}

impl DiffusionForm {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            DiffusionForm::One => 1.0,
            DiffusionForm::Constant { c } => c,
            DiffusionForm::TwoPlusSin => 2.0 + x.sin(),
            DiffusionForm::RationalBump => (1.0 + x * x) / (1.0 + 2.0 * x * x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            DiffusionForm::One | DiffusionForm::Constant { .. } => 0.0,
            DiffusionForm::TwoPlusSin => x.cos(),
            DiffusionForm::RationalBump => {
                let d = 1.0 + 2.0 * x * x;
                -2.0 * x / (d * d)
            }
        }
    }

    /// `(inf b, sup b)` over the real line.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            DiffusionForm::One => (1.0, 1.0),
            DiffusionForm::Constant { c } => (c, c),
            DiffusionForm::TwoPlusSin => (1.0, 3.0),
            DiffusionForm::RationalBump => (0.5, 1.0),
        }
    }
}

/// Full configuration of one fast-slow run.
#[derive(Debug, Clone)]
pub struct FastSlowConfig {
    pub map: MapModel,
    /// Scale parameter; the run takes `⌈ε⁻²⌉` steps.
    pub eps: f64,
    /// Initial condition ξ.
    pub xi: f64,
    pub drift: DriftFamily,
    /// Centered observable feeding the drift fluctuation terms.
    pub w: ObservableSpec,
    pub diffusion: DiffusionForm,
    /// Centered observable driving the noise term.
    pub v: ObservableSpec,
    /// Maximum steps allowed per path.
    pub step_budget: usize,
}

pub const DEFAULT_STEP_BUDGET: usize = 1 << 26;

impl FastSlowConfig {
    /// Steps `N = ⌈ε⁻²⌉` (dyadic ε gives exact integers).
    pub fn n_steps(&self) -> Result<usize, FastSlowError> {
        let raw = 1.0 / (self.eps * self.eps);
        let n = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
        let n = n as usize;
        if n > self.step_budget {
            return Err(FastSlowError::BudgetExceeded {
                eps: self.eps,
                steps: n,
                budget: self.step_budget,
            });
        }
        Ok(n)
    }
}

/// Iterate the slow recursion against a supplied fast orbit and interpolate
/// to a path on `[0, 1]` (node `k` at `t = k ε² ≈ k/N`).
pub fn simulate_fastslow(
    cfg: &FastSlowConfig,
    y_orbit: &[f64],
) -> Result<crate::paths::SamplePath, FastSlowError> {
    let n = cfg.n_steps()?;
    if y_orbit.len() < n {
        return Err(FastSlowError::OrbitTooShort { need: n, got: y_orbit.len() });
    }
    let eps = cfg.eps;
    let eps2 = eps * eps;
    let mut nodes = Vec::with_capacity(n + 1);
    let mut x = cfg.xi;
    nodes.push(x);
    for &y in &y_orbit[..n] {
        let w_y = cfg.w.eval(y);
        let drift_incr = eps2 * cfg.drift.a_eps(x, w_y, eps);
        let noise_incr = (cfg.diffusion.eval(x) * eps) * cfg.v.eval(y);
        x = x + drift_incr + noise_incr;
        nodes.push(x);
    }
    Ok(crate::paths::SamplePath::uniform(nodes))
}

/// Itô drift of the limiting SDE: `ā(x) + b(x) b'(x) Σ`, where `Σ` is the
/// Green–Kubo correlation sum `Σ_{n≥1} ∫ v·v∘Tⁿ dμ`.
pub fn ito_drift(x: f64, drift: &DriftFamily, b: &DiffusionForm, corr_sum: f64) -> f64 {
    drift.abar.eval(x) + b.eval(x) * b.deriv(x) * corr_sum
}

/// The same drift in expanded Stratonovich form,
/// `ā(x) − ½ b b' ∫v²dμ + ½ b b' σ²`; identical to [`ito_drift`] whenever
/// `σ² = ∫v²dμ + 2Σ`.
pub fn stratonovich_drift(
    x: f64,
    drift: &DriftFamily,
    b: &DiffusionForm,
    v2_mean: f64,
    sigma2: f64,
) -> f64 {
    let bb = b.eval(x) * b.deriv(x);
    drift.abar.eval(x) - 0.5 * bb * v2_mean + 0.5 * bb * sigma2
}

/// An Euler–Maruyama solution of the limiting SDE.
#[derive(Debug, Clone)]
pub struct SdeSolution {
    pub path: crate::paths::SamplePath,
    pub dt: f64,
    pub scheme: &'static str,
}

/// Integrate `dX = ito_drift dt + b(X) dW` on `[0, 1]` with `W` of variance
/// `σ²`: `X_{k+1} = X_k + drift Δt + b(X_k) √(σ²Δt) Z_k`.
pub fn solve_limit_sde<R: Rng>(
    drift: &DriftFamily,
    b: &DiffusionForm,
    sigma2: f64,
    corr_sum: f64,
    xi: f64,
    dt: f64,
    rng: &mut R,
) -> SdeSolution {
    assert!(dt > 0.0 && dt <= 0.0625, "dt must lie in (0, 1/16]");
    assert!(sigma2 >= 0.0);
    let n = (1.0 / dt).round() as usize;
    let noise_scale = (sigma2 * dt).sqrt();
    let mut nodes = Vec::with_capacity(n + 1);
    let mut x = xi;
    nodes.push(x);
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        let drift_incr = ito_drift(x, drift, b, corr_sum) * dt;
        let noise_incr = b.eval(x) * (noise_scale * z);
        x = x + drift_incr + noise_incr;
        nodes.push(x);
    }
    SdeSolution {
        path: crate::paths::SamplePath::uniform(nodes),
        dt,
        scheme: "euler-maruyama-ito",
    }
}

/// Integrate `dZ = drift(Z) dt + dW` (unit diffusion, `W` of variance
/// `σ²`); the ψ-transformed reference of the general fast-slow system. The
/// step arithmetic matches [`solve_limit_sde`] exactly when `b ≡ 1`.
pub fn solve_unit_sde<R: Rng>(
    drift: impl Fn(f64) -> f64,
    sigma2: f64,
    z0: f64,
    dt: f64,
    rng: &mut R,
) -> SdeSolution {
    assert!(dt > 0.0 && dt <= 0.0625, "dt must lie in (0, 1/16]");
    assert!(sigma2 >= 0.0);
    let n = (1.0 / dt).round() as usize;
    let noise_scale = (sigma2 * dt).sqrt();
    let mut nodes = Vec::with_capacity(n + 1);
    let mut z = z0;
    nodes.push(z);
    for _ in 0..n {
        let g: f64 = StandardNormal.sample(rng);
        let drift_incr = drift(z) * dt;
        let noise_incr = 1.0 * (noise_scale * g);
        z = z + drift_incr + noise_incr;
        nodes.push(z);
    }
    SdeSolution {
        path: crate::paths::SamplePath::uniform(nodes),
        dt,
        scheme: "euler-maruyama-ito",
    }
}

/// The unit-diffusion transform `ψ(x) = ∫₀ˣ dt/b(t)` with its inverse and
/// the transformed drift `Ā`.
#[derive(Debug, Clone)]
pub struct PsiTransform {
    b: DiffusionForm,
    tol: f64,
    /// `(x, ψ(x))` table on a symmetric grid, for inspection and export.
    pub table: Vec<(f64, f64)>,
}

/// Quadrature tolerance for ψ.
pub const PSI_TOL: f64 = 1e-10;

pub fn psi_transform(b: DiffusionForm, half_range: f64) -> Result<PsiTransform, FastSlowError> {
    let (bmin, _) = b.bounds();
    if bmin <= 0.0 {
        return Err(FastSlowError::BadDiffusion(bmin));
    }
    let mut table = Vec::with_capacity(257);
    for k in 0..=256 {
        let x = -half_range + 2.0 * half_range * k as f64 / 256.0;
        table.push((x, integrate_recip_b(&b, x, PSI_TOL)?));
    }
    Ok(PsiTransform { b, tol: PSI_TOL, table })
}

impl PsiTransform {
    pub fn psi(&self, x: f64) -> f64 {
        match self.b {
            DiffusionForm::One => x,
            DiffusionForm::Constant { c } => x / c,
            // the table is only a cache for export; evaluation is by
            // quadrature
            _ => integrate_recip_b(&self.b, x, self.tol).expect("psi quadrature"),
        }
    }

    /// Monotone inversion by bisection on the bracket `[z·b_min, z·b_max]`.
    pub fn psi_inv(&self, z: f64) -> f64 {
        match self.b {
            DiffusionForm::One => return z,
            DiffusionForm::Constant { c } => return z * c,
            _ => {}
        }
        if z == 0.0 {
            return 0.0;
        }
        let (bmin, bmax) = self.b.bounds();
        let (mut lo, mut hi) = if z > 0.0 {
            (z * bmin, z * bmax)
        } else {
            (z * bmax, z * bmin)
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.psi(mid) < z {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi.abs().max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Transformed drift
    /// `Ā(z) = ψ'(x) ā(x) + ½ ψ''(x) b(x)² ∫v²dμ = ā(x)/b(x) − ½ b'(x) ∫v²dμ`
    /// at `x = ψ⁻¹(z)`.
    pub fn abar_z(&self, z: f64, drift: &DriftFamily, v2_mean: f64) -> f64 {
        let x = self.psi_inv(z);
        drift.abar.eval(x) / self.b.eval(x) - 0.5 * self.b.deriv(x) * v2_mean
    }
}

/// Adaptive Simpson integral of `1/b` from 0 to `x` (signed).
fn integrate_recip_b(b: &DiffusionForm, x: f64, tol: f64) -> Result<f64, FastSlowError> {
    if x == 0.0 {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if x > 0.0 { (0.0, x, 1.0) } else { (x, 0.0, -1.0) };
    let f = |t: f64| 1.0 / b.eval(t);
    let mut depth_exceeded = false;
    let val = adaptive_simpson(&f, lo, hi, tol, 50, &mut depth_exceeded);
    if depth_exceeded {
        return Err(FastSlowError::QuadratureFailure { tol });
    }
    Ok(sign * val)
}

fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
    depth: usize,
    failed: &mut bool,
) -> f64 {
    let mid = 0.5 * (lo + hi);
    let simpson = |a: f64, b: f64| {
        let c = 0.5 * (a + b);
        (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b))
    };
    let whole = simpson(lo, hi);
    let left = simpson(lo, mid);
    let right = simpson(mid, hi);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol {
        return left + right + err / 15.0;
    }
    if depth == 0 {
        *failed = true;
        return left + right;
    }
    adaptive_simpson(f, lo, mid, 0.5 * tol, depth - 1, failed)
        + adaptive_simpson(f, mid, hi, 0.5 * tol, depth - 1, failed)
}

/// One row of the moment-condition table: Monte Carlo `L^q` norms of the
/// Birkhoff sums of the drift fluctuation (sup over the `u` grid), of `v`,
/// and of `v² − ∫v²dμ`, each divided by `√n`.
#[derive(Debug, Clone, Copy)]
pub struct MomentConditionRow {
    pub n: usize,
    pub drift_ratio: f64,
    pub v_ratio: f64,
    pub v2_ratio: f64,
}

pub fn check_moment_conditions<R: Rng>(
    cfg: &FastSlowConfig,
    q: f64,
    u_grid: &[f64],
    n_grid: &[usize],
    samples: u64,
    v2_mean: f64,
    rng: &mut R,
) -> Result<Vec<MomentConditionRow>, crate::transfer::TransferError> {
    assert!(q >= 1.0);
    if !cfg.map.order().admits_q(q) {
        let max = match cfg.map.order() {
            crate::maps::MapOrder::Supremum(p) => 2.0 * (p - 1.0),
            crate::maps::MapOrder::Unbounded => f64::INFINITY,
        };
        return Err(crate::transfer::TransferError::Admissibility { q, max });
    }
    let &n_max = n_grid.iter().max().expect("nonempty n grid");
    let cs: Vec<f64> = u_grid.iter().map(|&u| cfg.drift.coupling.eval(u)).collect();
    let c_sup = cs.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let mut acc_w = vec![0.0f64; n_grid.len()];
    let mut acc_v = vec![0.0f64; n_grid.len()];
    let mut acc_v2 = vec![0.0f64; n_grid.len()];
    for _ in 0..samples {
        let mut y = cfg.map.sample_invariant(rng);
        let (mut sw, mut sv, mut sv2) = (0.0f64, 0.0f64, 0.0f64);
        let mut gi = 0usize;
        for j in 1..=n_max {
            sw += cfg.w.eval(y);
            let vy = cfg.v.eval(y);
            sv += vy;
            sv2 += vy * vy - v2_mean;
            y = cfg.map.sampled_step(y, rng);
            while gi < n_grid.len() && n_grid[gi] == j {
                acc_w[gi] += sw.abs().powf(q);
                acc_v[gi] += sv.abs().powf(q);
                acc_v2[gi] += sv2.abs().powf(q);
                gi += 1;
            }
        }
    }
    let mf = samples as f64;
    Ok(n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let root = |a: f64| (a / mf).powf(1.0 / q) / (n as f64).sqrt();
            MomentConditionRow {
                n,
                // ã_u = c(u) w(y): the Birkhoff-sum norm scales by |c(u)|
                drift_ratio: c_sup * root(acc_w[i]),
                v_ratio: root(acc_v[i]),
                v2_ratio: root(acc_v2[i]),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::build_wn;
    use crate::rng::stream;
    use crate::transfer::{BaseFn, TransferConfig, TransferOperator};

    fn doubling_v() -> ObservableSpec {
        TransferOperator::for_map(&MapModel::Doubling, &TransferConfig::default())
            .unwrap()
            .center_observable(BaseFn::Identity, 1.0)
    }

    fn base_cfg(eps: f64) -> FastSlowConfig {
        FastSlowConfig {
            map: MapModel::Doubling,
            eps,
            xi: 0.0,
            drift: DriftFamily::mean_only(AbarForm::Zero),
            w: ObservableSpec::zero(),
            diffusion: DiffusionForm::One,
            v: doubling_v(),
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }

    #[test]
    fn trivial_drift_reduces_to_wn_exactly() {
        let cfg = base_cfg(2f64.powi(-5));
        let n = cfg.n_steps().unwrap();
        assert_eq!(n, 1024);
        let mut r = stream(1, "fs/reduce", 0);
        let orbit = cfg.map.sample_orbit(n, &mut r);
        let xhat = simulate_fastslow(&cfg, &orbit).unwrap();
        let vvals: Vec<f64> = orbit.iter().map(|&y| cfg.v.eval(y)).collect();
        let wn = build_wn(&vvals, n).unwrap();
        assert_eq!(xhat.values(), wn.values());
    }

    #[test]
    fn noiseless_system_is_the_euler_scheme() {
        // v ≡ 0, a = ā: the recursion is Euler for dX = ā(X) dt, step ε².
        let mut cfg = base_cfg(2f64.powi(-4));
        cfg.v = ObservableSpec::zero();
        cfg.drift = DriftFamily::mean_only(AbarForm::NegX);
        cfg.xi = 1.0;
        let n = cfg.n_steps().unwrap();
        let orbit = vec![0.3; n];
        let xhat = simulate_fastslow(&cfg, &orbit).unwrap();
        let dt = cfg.eps * cfg.eps;
        let mut x = 1.0f64;
        for k in 0..=n {
            assert!((xhat.values()[k] - x).abs() < 1e-14);
            x += dt * (-x);
        }
        let expect = (1.0 - dt).powi(n as i32);
        assert!((xhat.values()[n] - expect).abs() < 1e-10);
    }

    #[test]
    fn terminal_value_unrolls_to_the_noise_sum() {
        let cfg = base_cfg(2f64.powi(-3));
        let n = cfg.n_steps().unwrap();
        let orbit: Vec<f64> = (0..n).map(|k| if k % 2 == 0 { 0.75 } else { 0.25 }).collect();
        let xhat = simulate_fastslow(&cfg, &orbit).unwrap();
        let sum: f64 = orbit.iter().map(|&y| cfg.eps * (y - 0.5)).sum();
        assert!((xhat.values()[n] - sum).abs() < 1e-12);
    }

    #[test]
    fn budget_and_orbit_length_are_enforced() {
        let mut cfg = base_cfg(1e-4);
        cfg.step_budget = 1000;
        assert!(matches!(cfg.n_steps(), Err(FastSlowError::BudgetExceeded { .. })));
        let cfg = base_cfg(0.25);
        assert!(matches!(
            simulate_fastslow(&cfg, &[0.5; 3]),
            Err(FastSlowError::OrbitTooShort { need: 16, got: 3 })
        ));
    }

    #[test]
    fn ito_drift_hand_values() {
        // b ≡ 1 → ā(x)
        let d = DriftFamily::mean_only(AbarForm::NegX);
        assert_eq!(ito_drift(0.7, &d, &DiffusionForm::One, 123.0), -0.7);
        // doubling v = x−1/2: Σ = Σ 2^{-n}/12 = 1/12; b = 2 + sin x at 0:
        // ā(0) + b(0) b'(0) Σ = 0 + 2·1·(1/12)
        let d0 = DriftFamily::mean_only(AbarForm::Zero);
        let got = ito_drift(0.0, &d0, &DiffusionForm::TwoPlusSin, 1.0 / 12.0);
        assert!((got - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ito_and_stratonovich_drifts_agree_identically() {
        // with σ² = ∫v²dμ + 2Σ the two drift expressions coincide
        let d = DriftFamily::mean_only(AbarForm::Sin { amp: 0.8 });
        let v2 = 1.0 / 12.0;
        let corr = 1.0 / 12.0;
        let sigma2 = v2 + 2.0 * corr;
        for b in [
            DiffusionForm::One,
            DiffusionForm::Constant { c: 2.0 },
            DiffusionForm::TwoPlusSin,
            DiffusionForm::RationalBump,
        ] {
            let mut worst = 0.0f64;
            for k in 0..1000 {
                let x = -5.0 + 10.0 * k as f64 / 999.0;
                let ito = ito_drift(x, &d, &b, corr);
                let strat = stratonovich_drift(x, &d, &b, v2, sigma2);
                worst = worst.max((ito - strat).abs());
            }
            assert!(worst <= 1e-12, "{b:?}: residual {worst}");
        }
    }

    #[test]
    fn sde_with_zero_variance_is_deterministic_euler() {
        let d = DriftFamily::mean_only(AbarForm::NegX);
        let mut r = stream(2, "fs/sde0", 0);
        let sol = solve_limit_sde(&d, &DiffusionForm::One, 0.0, 0.0, 1.0, 1e-3, &mut r);
        let n = sol.path.segments();
        assert_eq!(n, 1000);
        let expect = (1.0 - 1e-3f64).powi(1000);
        assert!((sol.path.values()[n] - expect).abs() < 1e-12);
        assert_eq!(sol.scheme, "euler-maruyama-ito");
    }

    #[test]
    fn ou_moments_match_closed_forms() {
        // dX = −X dt + dW with variance σ² = 1/4, ξ = 1:
        // E X(1) = e⁻¹, Var X(1) = σ²(1 − e⁻²)/2.
        let d = DriftFamily::mean_only(AbarForm::NegX);
        let trials = 100_000u64;
        let (mut s, mut s2) = (0.0f64, 0.0f64);
        for i in 0..trials {
            let mut r = stream(3, "fs/ou", i);
            let sol = solve_limit_sde(&d, &DiffusionForm::One, 0.25, 0.0, 1.0, 1e-3, &mut r);
            let x1 = *sol.path.values().last().unwrap();
            s += x1;
            s2 += x1 * x1;
        }
        let mf = trials as f64;
        let mean = s / mf;
        let var = s2 / mf - mean * mean;
        let want_mean = (-1.0f64).exp();
        let want_var = 0.25 * (1.0 - (-2.0f64).exp()) / 2.0;
        let se_mean = (want_var / mf).sqrt();
        let se_var = want_var * (2.0 / mf).sqrt();
        assert!((mean - want_mean).abs() <= 3.0 * se_mean, "mean {mean}");
        assert!((var - want_var).abs() <= 3.0 * se_var, "var {var}");
    }

    #[test]
    fn terminal_law_is_gaussian_for_pure_noise() {
        // ā ≡ 0, b ≡ 1, σ² = 1: X(1) − ξ is standard normal.
        let d = DriftFamily::mean_only(AbarForm::Zero);
        let mut samples = Vec::with_capacity(10_000);
        for i in 0..10_000u64 {
            let mut r = stream(4, "fs/gauss", i);
            let sol = solve_limit_sde(&d, &DiffusionForm::One, 1.0, 0.0, 0.3, 1e-2, &mut r);
            samples.push(sol.path.values()[sol.path.segments()] - 0.3);
        }
        let phi = |x: f64| 0.5 * statrs::function::erf::erfc(-x / 2f64.sqrt());
        let dist = crate::distances::kolmogorov_distance(&samples, phi);
        assert!(dist <= 0.02, "KS {dist}");
    }

    #[test]
    fn weak_error_halves_with_the_step() {
        // Coupled refinement: the coarse path drives each 2Δt step with the
        // sum of the two fine Gaussian increments, so E[X_dt(1) − X_dt/2(1)]
        // is measurable with few paths. Successive halvings of Δt must
        // shrink that difference by a factor ≈ 2 (weak order 1).
        let d = DriftFamily::mean_only(AbarForm::NegX);
        let sigma2 = 0.25;
        let trials = 400_000u64;
        let mut diffs = [0.0f64; 2]; // D(1e-2 vs 5e-3), D(5e-3 vs 2.5e-3)
        for (level, dt) in [(0usize, 1e-2f64), (1usize, 5e-3f64)] {
            let steps = (1.0 / dt).round() as usize;
            let fine_dt = 0.5 * dt;
            let fine_scale = (sigma2 * fine_dt).sqrt();
            let mut acc = 0.0f64;
            for i in 0..trials {
                let mut r = stream(5, "fs/weak", i);
                let mut xc = 1.0f64;
                let mut xf = 1.0f64;
                for _ in 0..steps {
                    let z1: f64 = StandardNormal.sample(&mut r);
                    let z2: f64 = StandardNormal.sample(&mut r);
                    xf = xf + (-xf) * fine_dt + fine_scale * z1;
                    xf = xf + (-xf) * fine_dt + fine_scale * z2;
                    xc = xc + (-xc) * dt + fine_scale * (z1 + z2);
                }
                acc += xc - xf;
            }
            diffs[level] = acc / trials as f64;
        }
        let ratio = diffs[0] / diffs[1];
        assert!(
            (1.6..=2.4).contains(&ratio),
            "weak-error halving ratio {ratio} ({diffs:?})"
        );
    }

    #[test]
    fn psi_is_identity_for_unit_diffusion_and_linear_for_constants() {
        let psi = psi_transform(DiffusionForm::One, 6.0).unwrap();
        for x in [-3.0, 0.0, 0.5, 2.0] {
            assert!((psi.psi(x) - x).abs() < 1e-10);
        }
        let d = DriftFamily::mean_only(AbarForm::NegX);
        assert!((psi.abar_z(0.7, &d, 0.3) + 0.7).abs() < 1e-9);

        let psi2 = psi_transform(DiffusionForm::Constant { c: 2.0 }, 6.0).unwrap();
        assert!((psi2.psi(1.0) - 0.5).abs() < 1e-10);
        assert!((psi2.psi_inv(0.5) - 1.0).abs() < 1e-9);
        // Ā(z) = ½ ā(2z)
        assert!((psi2.abar_z(0.5, &d, 0.3) - 0.5 * (-1.0)).abs() < 1e-9);
    }

    #[test]
    fn psi_round_trip_is_tight_for_varying_diffusions() {
        for b in [DiffusionForm::TwoPlusSin, DiffusionForm::RationalBump] {
            let psi = psi_transform(b, 6.0).unwrap();
            for k in 0..1000 {
                let x = -5.0 + 10.0 * k as f64 / 999.0;
                let back = psi.psi_inv(psi.psi(x));
                assert!((back - x).abs() < 1e-8, "{b:?} at {x}: {back}");
            }
        }
    }

    #[test]
    fn moment_conditions_hold_for_doubling() {
        let mut cfg = base_cfg(0.125);
        cfg.drift = DriftFamily {
            abar: AbarForm::Zero,
            coupling: CouplingForm::Constant { c: 1.0 },
            eps13_coeff: 0.0,
        };
        cfg.w = doubling_v();
        let mut r = stream(6, "fs/moments", 0);
        let rows = check_moment_conditions(
            &cfg,
            2.0,
            &[-1.0, 0.0, 1.0],
            &[256, 512, 1024, 2048, 4096],
            2_000,
            1.0 / 12.0,
            &mut r,
        )
        .unwrap();
        // |v_n|_2 / √n → σ = 1/2
        let last = rows.last().unwrap();
        assert!((last.v_ratio - 0.5).abs() < 0.05, "{}", last.v_ratio);
        // condition (v²) ratio bounded: max/min ≤ 2 over the grid
        let (lo, hi) = rows.iter().fold((f64::INFINITY, 0.0f64), |(l, h), row| {
            (l.min(row.v2_ratio), h.max(row.v2_ratio))
        });
        assert!(hi / lo <= 2.0, "v² ratio spread {lo}..{hi}");
        // drift fluctuation shares the same bound (same observable here)
        let (lo, hi) = rows.iter().fold((f64::INFINITY, 0.0f64), |(l, h), row| {
            (l.min(row.drift_ratio), h.max(row.drift_ratio))
        });
        assert!(hi / lo <= 2.0, "drift ratio spread {lo}..{hi}");
    }

    #[test]
    fn drift_free_moment_rows_vanish() {
        let mut cfg = base_cfg(0.125);
        cfg.drift = DriftFamily::mean_only(AbarForm::NegX);
        let mut r = stream(7, "fs/momzero", 0);
        let rows =
            check_moment_conditions(&cfg, 2.0, &[0.0, 1.0], &[64, 128, 256], 200, 1.0 / 12.0, &mut r)
                .unwrap();
        assert!(rows.iter().all(|row| row.drift_ratio == 0.0));
    }

    #[test]
    fn inadmissible_q_is_rejected() {
        let mut cfg = base_cfg(0.125);
        cfg.map = MapModel::lsv(0.4).unwrap();
        let mut r = stream(8, "fs/adm", 0);
        let err = check_moment_conditions(&cfg, 4.0, &[0.0], &[64], 10, 0.1, &mut r);
        assert!(matches!(
            err,
            Err(crate::transfer::TransferError::Admissibility { .. })
        ));
    }
}
