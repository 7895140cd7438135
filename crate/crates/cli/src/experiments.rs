//! Experiment pipelines and CSV reporting.
//!
//! Every pipeline is a pure function of `(config, master seed)`: ensembles
//! are generated in parallel from per-index derived streams, aggregation
//! happens in index order, and floats are written with 17 significant
//! digits, so re-running a configuration reproduces identical CSV bytes with
//! any worker count.
//!
//! Stream namespaces are shared across experiment kinds — the `model`
//! streams drive fast orbits and the `ref` streams drive reference noise in
//! both the WIP and the fast-slow pipelines — so a fast-slow run with
//! trivial drift and unit diffusion reproduces the WIP run bit for bit under
//! a shared seed.

use crate::config::{ExperimentConfig, ExperimentKind};
use anyhow::{Context, Result};
use rayon::prelude::*;
use std::fs;
use std::io::Write;
use std::path::Path;
use wiplab_core::distances::{
    brute_force_prokhorov, empirical_prokhorov, kolmogorov_distance, normal_cdf, project_paths,
    PointCloud,
};
use wiplab_core::fastslow::{
    simulate_fastslow, solve_limit_sde, solve_unit_sde, psi_transform, DriftFamily, FastSlowConfig,
    DEFAULT_STEP_BUDGET,
};
use wiplab_core::paths::{brownian_path, build_wn, PathEnsemble, SamplePath};
use wiplab_core::rates::{fit_rate, lsv_rates, r1_wip, r_homog, r_wip};
use wiplab_core::rng::stream;
use wiplab_core::transfer::{
    batch_sigma2, gordin_decompose, green_kubo_sigma2, vnk_profile, CorrelationMethod,
    ObservableSpec, TransferConfig, TransferOperator,
};

/// One row of `distances.csv`.
#[derive(Debug, Clone)]
pub struct DistRow {
    pub experiment: String,
    pub scale: f64,
    pub estimator: String,
    pub value: f64,
    pub aux1: f64,
    pub aux2: f64,
    pub aux3: f64,
}

/// One row of `fits.csv`.
#[derive(Debug, Clone)]
pub struct FitRow {
    pub experiment: String,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
}

/// One row of `rates.csv`.
#[derive(Debug, Clone)]
pub struct RateRow {
    pub param: f64,
    pub branch: String,
    pub exponent: f64,
    pub logpower: f64,
}

/// Everything a run produces before it is written out.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub distances: Vec<DistRow>,
    pub fits: Vec<FitRow>,
    pub rates: Vec<RateRow>,
    /// `(file name, contents)` extras such as grid dumps or path exports.
    pub extras: Vec<(String, Vec<u8>)>,
}

fn transfer_config(cfg: &ExperimentConfig) -> TransferConfig {
    TransferConfig {
        grid: cfg.grid_segments,
        ulam_cells: cfg.ulam_cells,
        ulam_xmin: cfg.ulam_xmin,
        ..TransferConfig::default()
    }
}

/// Variance data shared by the CLT, WIP and fast-slow pipelines, computed
/// deterministically by operator quadrature.
struct SigmaInfo {
    sigma2: f64,
    /// `Σ_{n≥1} ∫ v·v∘Tⁿ dμ`.
    corr_sum: f64,
    /// `∫ v² dμ`.
    v2_mean: f64,
}

fn observable(cfg: &ExperimentConfig, tcfg: &TransferConfig) -> Result<ObservableSpec> {
    let op = TransferOperator::for_map(&cfg.map, tcfg)?;
    Ok(op.center_observable(cfg.observable_base.clone(), cfg.observable_eta))
}

fn sigma_info(cfg: &ExperimentConfig, v: &ObservableSpec, tcfg: &TransferConfig) -> Result<SigmaInfo> {
    let mut dummy = stream(cfg.seed, "sigma", 0);
    let est = green_kubo_sigma2(
        &cfg.map,
        v,
        cfg.green_kubo_terms,
        CorrelationMethod::Quadrature,
        tcfg,
        &mut dummy,
    )?;
    let corr_sum = est.terms[1..].iter().sum();
    Ok(SigmaInfo { sigma2: est.value, corr_sum, v2_mean: est.terms[0] })
}

/// Run the configured experiment and collect its rows.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.kind {
        ExperimentKind::Clt => run_clt(cfg),
        ExperimentKind::WipRate => run_wip_rate(cfg),
        ExperimentKind::DecompCheck => run_decomp_check(cfg),
        ExperimentKind::VnkScaling => run_vnk_scaling(cfg),
        ExperimentKind::FastslowRate => run_fastslow_rate(cfg),
        ExperimentKind::ProkhorovSelftest => run_selftest(cfg),
        ExperimentKind::RateTable => run_rate_table(cfg),
    }
}

fn run_clt(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let tcfg = transfer_config(cfg);
    let v = observable(cfg, &tcfg)?;
    let sig = sigma_info(cfg, &v, &tcfg)?;
    let mut out = RunOutput::default();
    for &n in &cfg.n_grid {
        let samples: Vec<f64> = (0..cfg.clt_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(cfg.seed, "model", i);
                let orbit = cfg.map.sample_orbit(n, &mut rng);
                let vvals: Vec<f64> = orbit.iter().map(|&y| v.eval(y)).collect();
                let wn = build_wn(&vvals, n).expect("orbit length matches n");
                *wn.values().last().unwrap()
            })
            .collect();
        let d = kolmogorov_distance(&samples, |x| normal_cdf(x, sig.sigma2));
        out.distances.push(DistRow {
            experiment: "clt".into(),
            scale: n as f64,
            estimator: "kolmogorov".into(),
            value: d,
            aux1: cfg.clt_samples as f64,
            aux2: sig.sigma2,
            aux3: 0.0,
        });
    }
    Ok(out)
}

fn wn_ensemble(cfg: &ExperimentConfig, v: &ObservableSpec, n: usize) -> PathEnsemble {
    let map = cfg.map;
    let v = v.clone();
    PathEnsemble::generate(cfg.ensemble_size, "model", cfg.seed, move |_i, rng| {
        let orbit = map.sample_orbit(n, rng);
        let vvals: Vec<f64> = orbit.iter().map(|&y| v.eval(y)).collect();
        build_wn(&vvals, n).expect("orbit length matches n")
    })
}

fn brownian_ensemble(cfg: &ExperimentConfig, sigma2: f64, n: usize) -> PathEnsemble {
    PathEnsemble::generate(cfg.ensemble_size, "ref", cfg.seed, move |_i, rng| {
        brownian_path(sigma2, n, rng)
    })
}

fn prokhorov_row(
    experiment: &str,
    scale: f64,
    label: &str,
    model: &PointCloud,
    reference: &PointCloud,
    dim: usize,
) -> Result<DistRow> {
    let rep = empirical_prokhorov(model, reference)?;
    Ok(DistRow {
        experiment: experiment.into(),
        scale,
        estimator: label.into(),
        value: rep.value,
        aux1: rep.matching_size as f64,
        aux2: rep.threshold_grid as f64,
        aux3: dim as f64,
    })
}

fn run_wip_rate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let tcfg = transfer_config(cfg);
    let v = observable(cfg, &tcfg)?;
    let sig = sigma_info(cfg, &v, &tcfg)?;
    let times = cfg.times();
    let mut out = RunOutput::default();
    let mut pairs = Vec::new();
    for &n in &cfg.n_grid {
        let model = wn_ensemble(cfg, &v, n);
        let reference = brownian_ensemble(cfg, sig.sigma2, n);
        let pc = project_paths(&model, &times)?;
        let qc = project_paths(&reference, &times)?;
        let row = prokhorov_row("wip-rate", n as f64, "prokhorov", &pc, &qc, times.len())?;
        pairs.push((n as f64, row.value));
        out.distances.push(row);
        if cfg.export_paths {
            let mut buf = Vec::new();
            model.write_csv(&mut buf)?;
            out.extras.push((format!("paths-model-n{n}.csv"), buf));
        }
    }
    let fit = fit_rate(&pairs)?;
    out.fits.push(FitRow {
        experiment: "wip-rate".into(),
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        n_points: fit.pairs.len(),
    });
    Ok(out)
}

fn run_decomp_check(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let tcfg = transfer_config(cfg);
    let v = observable(cfg, &tcfg)?;
    let dec = gordin_decompose(&cfg.map, &v, cfg.gordin_k, &tcfg)?;
    let mut dummy = stream(cfg.seed, "sigma", 0);
    let gk = green_kubo_sigma2(
        &cfg.map,
        &v,
        cfg.green_kubo_terms,
        CorrelationMethod::Quadrature,
        &tcfg,
        &mut dummy,
    )?;
    let mut batch_rng = stream(cfg.seed, "batch", 0);
    let batch = batch_sigma2(&cfg.map, &v, 1 << 12, cfg.sigma_mc_samples.min(100_000), &mut batch_rng);
    let mut out = RunOutput::default();
    let mut push = |name: &str, value: f64, aux1: f64, aux2: f64| {
        out.distances.push(DistRow {
            experiment: "decomp-check".into(),
            scale: cfg.gordin_k as f64,
            estimator: name.into(),
            value,
            aux1,
            aux2,
            aux3: 0.0,
        });
    };
    push("coboundary_residual", dec.coboundary_residual, 0.0, 0.0);
    push("martingale_residual", dec.martingale_residual, 0.0, 0.0);
    push("sigma2_m", dec.sigma2_m, 0.0, 0.0);
    push("sigma2_green_kubo", gk.value, cfg.green_kubo_terms as f64, gk.std_error);
    push("sigma2_batch", batch.value, batch.std_error, if batch.degenerate { 1.0 } else { 0.0 });
    push("chi_contraction", dec.contraction, 0.0, 0.0);
    push("chi_tail_estimate", dec.tail_estimate, 0.0, 0.0);
    push("truncation_terms", dec.truncation as f64, 0.0, 0.0);
    if cfg.export_grids {
        let mut buf = Vec::new();
        dec.chi.write_csv(&mut buf)?;
        out.extras.push(("chi.csv".into(), buf));
        let mut buf = Vec::new();
        dec.m_nodes.write_csv(&mut buf)?;
        out.extras.push(("m.csv".into(), buf));
    }
    Ok(out)
}

fn run_vnk_scaling(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let tcfg = transfer_config(cfg);
    let v = observable(cfg, &tcfg)?;
    let dec = gordin_decompose(&cfg.map, &v, cfg.gordin_k, &tcfg)?;
    let mut out = RunOutput::default();
    let mut pairs = Vec::new();
    for &n in &cfg.n_grid {
        let sq_sum: f64 = (0..cfg.vnk_starts)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(cfg.seed, "vnk", i);
                let orbit = cfg.map.sample_orbit(n, &mut rng);
                let prof = vnk_profile(&dec, &orbit).expect("positive variance");
                prof.iter()
                    .enumerate()
                    .fold(0.0f64, |acc, (k, &val)| {
                        acc.max((val - k as f64 / n as f64).abs())
                    })
                    .powi(2)
            })
            .sum();
        let rms = (sq_sum / cfg.vnk_starts as f64).sqrt();
        pairs.push((n as f64, rms));
        out.distances.push(DistRow {
            experiment: "vnk-scaling".into(),
            scale: n as f64,
            estimator: "rms_max_vnk_dev".into(),
            value: rms,
            aux1: cfg.vnk_starts as f64,
            aux2: dec.sigma2_m,
            aux3: 0.0,
        });
    }
    let fit = fit_rate(&pairs)?;
    out.fits.push(FitRow {
        experiment: "vnk-scaling".into(),
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        n_points: fit.pairs.len(),
    });
    Ok(out)
}

fn run_fastslow_rate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let tcfg = transfer_config(cfg);
    let v = observable(cfg, &tcfg)?;
    let sig = sigma_info(cfg, &v, &tcfg)?;
    let w = match &cfg.drift_observable_base {
        Some(base) => {
            let op = TransferOperator::for_map(&cfg.map, &tcfg)?;
            op.center_observable(base.clone(), cfg.observable_eta)
        }
        None => ObservableSpec::zero(),
    };
    let drift = DriftFamily {
        abar: cfg.abar,
        coupling: cfg.coupling,
        eps13_coeff: cfg.eps13_coeff,
    };
    let psi = psi_transform(cfg.diffusion, 8.0)?;
    let times = cfg.times();
    let mut out = RunOutput::default();
    let mut pairs = Vec::new();
    for &eps in &cfg.eps_grid {
        let fscfg = FastSlowConfig {
            map: cfg.map,
            eps,
            xi: cfg.xi,
            drift,
            w: w.clone(),
            diffusion: cfg.diffusion,
            v: v.clone(),
            step_budget: DEFAULT_STEP_BUDGET,
        };
        let n = fscfg.n_steps()?;
        let dt = eps * eps;
        let model = {
            let fscfg = fscfg.clone();
            PathEnsemble::generate(cfg.ensemble_size, "model", cfg.seed, move |_i, rng| {
                let orbit = fscfg.map.sample_orbit(n, rng);
                simulate_fastslow(&fscfg, &orbit).expect("orbit length matches")
            })
        };
        let reference = {
            let (sigma2, corr, xi, b) = (sig.sigma2, sig.corr_sum, cfg.xi, cfg.diffusion);
            PathEnsemble::generate(cfg.ensemble_size, "ref", cfg.seed, move |_i, rng| {
                solve_limit_sde(&drift, &b, sigma2, corr, xi, dt, rng).path
            })
        };
        let pc = project_paths(&model, &times)?;
        let qc = project_paths(&reference, &times)?;
        let row = prokhorov_row("fastslow-rate", eps, "prokhorov", &pc, &qc, times.len())?;
        pairs.push((eps, row.value));
        out.distances.push(row);

        // ψ-transformed cross-check: ψ(x̂_ε) against dZ = Ā(Z) dt + dW.
        let psi_model = PathEnsemble {
            paths: model
                .paths
                .iter()
                .map(|p| SamplePath::uniform(p.values().iter().map(|&x| psi.psi(x)).collect()))
                .collect(),
            descriptor: "model/psi".into(),
            master_seed: cfg.seed,
        };
        let z_reference = {
            let (sigma2, v2, z0) = (sig.sigma2, sig.v2_mean, psi.psi(cfg.xi));
            let psi = psi.clone();
            let drift = drift;
            PathEnsemble::generate(cfg.ensemble_size, "ref", cfg.seed, move |_i, rng| {
                solve_unit_sde(|z| psi.abar_z(z, &drift, v2), sigma2, z0, dt, rng).path
            })
        };
        let pz = project_paths(&psi_model, &times)?;
        let qz = project_paths(&z_reference, &times)?;
        out.distances
            .push(prokhorov_row("fastslow-rate", eps, "prokhorov_psi", &pz, &qz, times.len())?);
        if cfg.export_paths {
            let mut buf = Vec::new();
            model.write_csv(&mut buf)?;
            out.extras.push((format!("paths-model-eps{eps}.csv"), buf));
        }
    }
    let fit = fit_rate(&pairs)?;
    out.fits.push(FitRow {
        experiment: "fastslow-rate".into(),
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        n_points: fit.pairs.len(),
    });
    Ok(out)
}

fn run_selftest(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let results: Vec<bool> = (0..cfg.selftest_trials)
        .into_par_iter()
        .map(|trial| {
            use rand::Rng;
            let mut rng = stream(cfg.seed, "selftest", trial);
            let m = 2 + (trial % 5) as usize;
            let d = [1usize, 2, 4][(trial % 3) as usize];
            let spread = if trial % 2 == 0 { 1.0 } else { 3.0 };
            let p = PointCloud::new(d, (0..m * d).map(|_| rng.gen::<f64>() * spread).collect());
            let q = PointCloud::new(d, (0..m * d).map(|_| rng.gen::<f64>() * spread).collect());
            let fast = empirical_prokhorov(&p, &q).expect("solver");
            let slow = brute_force_prokhorov(&p, &q).expect("oracle");
            fast.value == slow.value
        })
        .collect();
    let passes = results.iter().filter(|&&b| b).count();
    out.distances.push(DistRow {
        experiment: "prokhorov-selftest".into(),
        scale: cfg.selftest_trials as f64,
        estimator: "oracle_equal_count".into(),
        value: passes as f64,
        aux1: cfg.selftest_trials as f64,
        aux2: 0.0,
        aux3: 0.0,
    });
    let p = PointCloud::new(1, vec![0.0, 1.0]);
    let q = PointCloud::new(1, vec![0.05, 2.0]);
    let hand = empirical_prokhorov(&p, &q)?;
    out.distances.push(DistRow {
        experiment: "prokhorov-selftest".into(),
        scale: 2.0,
        estimator: "hand_case_value".into(),
        value: hand.value,
        aux1: 0.5,
        aux2: if hand.value == 0.5 { 1.0 } else { 0.0 },
        aux3: 0.0,
    });
    Ok(out)
}

fn run_rate_table(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    for &g in &cfg.table_gammas {
        let r = lsv_rates(g)?;
        out.rates.push(RateRow {
            param: g,
            branch: "wip".into(),
            exponent: r.wip_exponent,
            logpower: 0.0,
        });
        out.rates.push(RateRow {
            param: g,
            branch: if r.homog_log_free { "homog" } else { "homog-low-gamma" }.into(),
            exponent: r.homog_exponent,
            logpower: 0.0,
        });
    }
    for &p in &cfg.table_p {
        out.rates.push(RateRow {
            param: p,
            branch: "wip".into(),
            exponent: r_wip(p)?,
            logpower: 0.0,
        });
        out.rates.push(RateRow {
            param: p,
            branch: "wip-martingale".into(),
            exponent: r1_wip(p)?,
            logpower: 0.0,
        });
        let h = r_homog(p)?;
        out.rates.push(RateRow {
            param: p,
            branch: "homog".into(),
            exponent: h.exponent,
            logpower: h.log_power,
        });
    }
    Ok(out)
}

/// 17 significant digits, fixed scientific format.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn distances_csv(rows: &[DistRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    writeln!(buf, "experiment,scale,estimator,value,aux1,aux2,aux3").unwrap();
    for r in rows {
        writeln!(
            buf,
            "{},{},{},{},{},{},{}",
            r.experiment,
            fmt_f64(r.scale),
            r.estimator,
            fmt_f64(r.value),
            fmt_f64(r.aux1),
            fmt_f64(r.aux2),
            fmt_f64(r.aux3)
        )
        .unwrap();
    }
    buf
}

pub fn fits_csv(rows: &[FitRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    writeln!(buf, "experiment,slope,intercept,r2,n_points").unwrap();
    for r in rows {
        writeln!(
            buf,
            "{},{},{},{},{}",
            r.experiment,
            fmt_f64(r.slope),
            fmt_f64(r.intercept),
            fmt_f64(r.r2),
            r.n_points
        )
        .unwrap();
    }
    buf
}

pub fn rates_csv(rows: &[RateRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    writeln!(buf, "param,branch,exponent,logpower").unwrap();
    for r in rows {
        writeln!(
            buf,
            "{},{},{},{}",
            fmt_f64(r.param),
            r.branch,
            fmt_f64(r.exponent),
            fmt_f64(r.logpower)
        )
        .unwrap();
    }
    buf
}

/// Write the three CSVs, any extras, and the run manifest. Returns the
/// manifest text.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    out: &RunOutput,
    dir: &Path,
    wallclock_seconds: f64,
) -> Result<String> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("distances.csv"), distances_csv(&out.distances))?;
    fs::write(dir.join("fits.csv"), fits_csv(&out.fits))?;
    fs::write(dir.join("rates.csv"), rates_csv(&out.rates))?;
    for (name, bytes) in &out.extras {
        fs::write(dir.join(name), bytes)?;
    }
    let mut m = String::new();
    m.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    m.push_str(&format!("experiment = {}\n", cfg.kind.name()));
    m.push_str(&format!("seed = {}\n", cfg.seed));
    m.push_str(&format!("wallclock_seconds = {wallclock_seconds:.3}\n"));
    m.push_str(&format!("rows.distances = {}\n", out.distances.len()));
    m.push_str(&format!("rows.fits = {}\n", out.fits.len()));
    m.push_str(&format!("rows.rates = {}\n", out.rates.len()));
    for (k, v) in &cfg.echo {
        m.push_str(&format!("config.{k} = {v}\n"));
    }
    fs::write(dir.join("manifest.txt"), &m)?;
    Ok(m)
}

/// Run inside a dedicated thread pool when a worker count is pinned;
/// results are identical for any pool size.
pub fn run_with_workers(cfg: &ExperimentConfig) -> Result<RunOutput> {
    if cfg.workers == 0 {
        run(cfg)
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .context("building worker pool")?;
        pool.install(|| run(cfg))
    }
}
