//! Flat `key = value` configuration with dotted sections.
//!
//! One structured text file per run; `#` starts a comment line, blank lines
//! are skipped, duplicate keys are rejected. The only environment influence
//! on a run is the optional output-directory override from the command line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use wiplab_core::fastslow::{AbarForm, CouplingForm, DiffusionForm};
use wiplab_core::maps::MapModel;
use wiplab_core::transfer::BaseFn;

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.to_string(), message: message.into() }
}

/// The experiment pipelines the runner can execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Clt,
    WipRate,
    DecompCheck,
    VnkScaling,
    FastslowRate,
    ProkhorovSelftest,
    RateTable,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Clt => "clt",
            ExperimentKind::WipRate => "wip-rate",
            ExperimentKind::DecompCheck => "decomp-check",
            ExperimentKind::VnkScaling => "vnk-scaling",
            ExperimentKind::FastslowRate => "fastslow-rate",
            ExperimentKind::ProkhorovSelftest => "prokhorov-selftest",
            ExperimentKind::RateTable => "rate-table",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "clt" => ExperimentKind::Clt,
            "wip-rate" => ExperimentKind::WipRate,
            "decomp-check" => ExperimentKind::DecompCheck,
            "vnk-scaling" => ExperimentKind::VnkScaling,
            "fastslow-rate" => ExperimentKind::FastslowRate,
            "prokhorov-selftest" => ExperimentKind::ProkhorovSelftest,
            "rate-table" => ExperimentKind::RateTable,
            _ => return None,
        })
    }
}

/// Raw `key = value` map.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(err(
                &format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            ));
        };
        let key = k.trim().to_string();
        let val = v.trim().to_string();
        if map.insert(key.clone(), val).is_some() {
            return Err(err(&key, "duplicate key"));
        }
    }
    Ok(map)
}

/// Parsed and typed run configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub map: MapModel,
    pub observable_base: BaseFn,
    pub observable_eta: f64,
    pub n_grid: Vec<usize>,
    pub eps_grid: Vec<f64>,
    pub ensemble_size: usize,
    pub projection_dim: usize,
    /// Explicit projection times; empty means the dyadic default `k/d`.
    pub projection_times: Vec<f64>,
    pub gordin_k: usize,
    pub grid_segments: usize,
    pub ulam_cells: usize,
    pub ulam_xmin: f64,
    pub green_kubo_terms: usize,
    pub sigma_mc_samples: u64,
    pub clt_samples: u64,
    pub vnk_starts: u64,
    pub selftest_trials: u64,
    pub abar: AbarForm,
    pub coupling: CouplingForm,
    pub eps13_coeff: f64,
    pub diffusion: DiffusionForm,
    pub xi: f64,
    pub drift_observable_base: Option<BaseFn>,
    pub table_gammas: Vec<f64>,
    pub table_p: Vec<f64>,
    pub export_paths: bool,
    pub export_grids: bool,
    /// Echo of the raw key/value pairs, for the manifest.
    pub echo: BTreeMap<String, String>,
}

fn get_f64(map: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64, ConfigError> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| err(key, format!("not a number: `{v}`"))),
    }
}

fn get_u64(map: &BTreeMap<String, String>, key: &str, default: u64) -> Result<u64, ConfigError> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| err(key, format!("not an integer: `{v}`"))),
    }
}

fn get_usize(map: &BTreeMap<String, String>, key: &str, default: usize) -> Result<usize, ConfigError> {
    Ok(get_u64(map, key, default as u64)? as usize)
}

fn get_bool(map: &BTreeMap<String, String>, key: &str, default: bool) -> Result<bool, ConfigError> {
    match map.get(key).map(String::as_str) {
        None => Ok(default),
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        Some(v) => Err(err(key, format!("expected true/false, got `{v}`"))),
    }
}

fn get_list_f64(map: &BTreeMap<String, String>, key: &str) -> Result<Vec<f64>, ConfigError> {
    match map.get(key) {
        None => Ok(Vec::new()),
        Some(v) if v.trim().is_empty() => Ok(Vec::new()),
        Some(v) => v
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse()
                    .map_err(|_| err(key, format!("bad list entry `{tok}`")))
            })
            .collect(),
    }
}

fn get_list_usize(map: &BTreeMap<String, String>, key: &str) -> Result<Vec<usize>, ConfigError> {
    match map.get(key) {
        None => Ok(Vec::new()),
        Some(v) if v.trim().is_empty() => Ok(Vec::new()),
        Some(v) => v
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse()
                    .map_err(|_| err(key, format!("bad list entry `{tok}`")))
            })
            .collect(),
    }
}

fn parse_base(map: &BTreeMap<String, String>, prefix: &str) -> Result<Option<BaseFn>, ConfigError> {
    let key = format!("{prefix}.base");
    let Some(name) = map.get(&key) else { return Ok(None) };
    Ok(Some(match name.as_str() {
        "x" => BaseFn::Identity,
        "cos2pi" => BaseFn::Cos2Pi,
        "pow" => {
            let theta = get_f64(map, &format!("{prefix}.theta"), 0.5)?;
            if !(0.0..=1.0).contains(&theta) || theta == 0.0 {
                return Err(err(&format!("{prefix}.theta"), "theta must lie in (0, 1]"));
            }
            BaseFn::Power { theta }
        }
        "poly" => {
            let coeffs = get_list_f64(map, &format!("{prefix}.coeffs"))?;
            if coeffs.is_empty() {
                return Err(err(&format!("{prefix}.coeffs"), "poly needs coefficients"));
            }
            BaseFn::Poly(coeffs)
        }
        other => return Err(err(&key, format!("unknown base `{other}`"))),
    }))
}

fn parse_form(spec: &str, key: &str) -> Result<(String, Option<f64>), ConfigError> {
    match spec.split_once(':') {
        None => Ok((spec.to_string(), None)),
        Some((name, arg)) => {
            let v: f64 = arg
                .trim()
                .parse()
                .map_err(|_| err(key, format!("bad numeric argument `{arg}`")))?;
            Ok((name.to_string(), Some(v)))
        }
    }
}

impl ExperimentConfig {
    pub fn from_map(
        kind: ExperimentKind,
        map: BTreeMap<String, String>,
    ) -> Result<Self, ConfigError> {
        if let Some(declared) = map.get("experiment") {
            if ExperimentKind::parse(declared) != Some(kind) {
                return Err(err(
                    "experiment",
                    format!("config declares `{declared}` but the `{}` subcommand was invoked", kind.name()),
                ));
            }
        }
        let map_kind = map.get("map.kind").map(String::as_str).unwrap_or("doubling");
        let gamma = get_f64(&map, "map.gamma", f64::NAN)?;
        let model = match map_kind {
            "doubling" => MapModel::Doubling,
            "gauss" => MapModel::Gauss,
            "lsv" => {
                if gamma.is_nan() {
                    return Err(err("map.gamma", "lsv requires map.gamma"));
                }
                MapModel::lsv(gamma).map_err(|e| err("map.gamma", e.to_string()))?
            }
            other => return Err(err("map.kind", format!("unknown map `{other}`"))),
        };
        if map_kind != "lsv" && !gamma.is_nan() {
            return Err(err("map.gamma", "gamma is only meaningful for the lsv map"));
        }

        let abar_spec = map.get("fastslow.abar").map(String::as_str).unwrap_or("zero");
        let (abar_name, abar_arg) = parse_form(abar_spec, "fastslow.abar")?;
        let abar = match (abar_name.as_str(), abar_arg) {
            ("zero", None) => AbarForm::Zero,
            ("negx", None) => AbarForm::NegX,
            ("sin", Some(amp)) => AbarForm::Sin { amp },
            _ => return Err(err("fastslow.abar", format!("unknown form `{abar_spec}`"))),
        };
        let coupling_spec = map.get("fastslow.coupling").map(String::as_str).unwrap_or("zero");
        let (c_name, c_arg) = parse_form(coupling_spec, "fastslow.coupling")?;
        let coupling = match (c_name.as_str(), c_arg) {
            ("zero", None) => CouplingForm::Zero,
            ("const", Some(c)) => CouplingForm::Constant { c },
            ("cos", Some(amp)) => CouplingForm::Cos { amp },
            _ => return Err(err("fastslow.coupling", format!("unknown form `{coupling_spec}`"))),
        };
        let b_spec = map.get("fastslow.b").map(String::as_str).unwrap_or("one");
        let (b_name, b_arg) = parse_form(b_spec, "fastslow.b")?;
        let diffusion = match (b_name.as_str(), b_arg) {
            ("one", None) => DiffusionForm::One,
            ("const", Some(c)) => DiffusionForm::Constant { c },
            ("twoplussin", None) => DiffusionForm::TwoPlusSin,
            ("rationalbump", None) => DiffusionForm::RationalBump,
            _ => return Err(err("fastslow.b", format!("unknown form `{b_spec}`"))),
        };

        Ok(ExperimentConfig {
            kind,
            seed: get_u64(&map, "seed", 42)?,
            out: PathBuf::from(map.get("out").cloned().unwrap_or_else(|| "out".into())),
            workers: get_usize(&map, "workers", 0)?,
            map: model,
            observable_base: parse_base(&map, "observable")?.unwrap_or(BaseFn::Identity),
            observable_eta: get_f64(&map, "observable.eta", 1.0)?,
            n_grid: get_list_usize(&map, "scale.n")?,
            eps_grid: get_list_f64(&map, "scale.eps")?,
            ensemble_size: get_usize(&map, "ensemble.size", 4096)?,
            projection_dim: get_usize(&map, "projection.dim", 8)?,
            projection_times: get_list_f64(&map, "projection.times")?,
            gordin_k: get_usize(&map, "gordin.k", 60)?,
            grid_segments: get_usize(&map, "grid.segments", 1 << 12)?,
            ulam_cells: get_usize(&map, "ulam.cells", 1 << 14)?,
            ulam_xmin: get_f64(&map, "ulam.xmin", 1e-6)?,
            green_kubo_terms: get_usize(&map, "greenkubo.terms", 40)?,
            sigma_mc_samples: get_u64(&map, "greenkubo.mc_samples", 200_000)?,
            clt_samples: get_u64(&map, "clt.samples", 10_000)?,
            vnk_starts: get_u64(&map, "vnk.starts", 256)?,
            selftest_trials: get_u64(&map, "selftest.trials", 500)?,
            abar,
            coupling,
            eps13_coeff: get_f64(&map, "fastslow.eps13", 0.0)?,
            diffusion,
            xi: get_f64(&map, "fastslow.xi", 0.0)?,
            drift_observable_base: parse_base(&map, "fastslow.w")?,
            table_gammas: get_list_f64(&map, "table.gammas")?,
            table_p: get_list_f64(&map, "table.p")?,
            export_paths: get_bool(&map, "export.paths", false)?,
            export_grids: get_bool(&map, "export.grids", false)?,
            echo: map,
        })
    }

    /// Projection times: explicit list or the dyadic default `k/d`.
    pub fn times(&self) -> Vec<f64> {
        if !self.projection_times.is_empty() {
            return self.projection_times.clone();
        }
        let d = self.projection_dim;
        (1..=d).map(|k| k as f64 / d as f64).collect()
    }
}

/// A single validation failure; violations are data, not errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

fn violate(out: &mut Vec<Violation>, field: &str, message: impl Into<String>) {
    out.push(Violation { field: field.into(), message: message.into() });
}

/// Structural and admissibility checks; an empty list means the config is
/// runnable.
pub fn validate(cfg: &ExperimentConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    let needs_n = matches!(
        cfg.kind,
        ExperimentKind::Clt | ExperimentKind::WipRate | ExperimentKind::VnkScaling
    );
    let needs_eps = cfg.kind == ExperimentKind::FastslowRate;
    if needs_n {
        if cfg.n_grid.is_empty() {
            violate(&mut v, "scale.n", "this experiment needs an n grid");
        }
        if cfg.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            violate(&mut v, "scale.n", "grid must be strictly increasing");
        }
    }
    if needs_eps {
        if cfg.eps_grid.is_empty() {
            violate(&mut v, "scale.eps", "this experiment needs an eps grid");
        }
        if cfg.eps_grid.windows(2).any(|w| w[1] <= w[0]) {
            violate(&mut v, "scale.eps", "grid must be strictly increasing");
        }
        if cfg.eps_grid.iter().any(|&e| !(0.0..1.0).contains(&e) || e == 0.0) {
            violate(&mut v, "scale.eps", "eps values must lie in (0, 1)");
        }
    }
    if cfg.ensemble_size < 2 {
        violate(&mut v, "ensemble.size", "need at least 2 paths per ensemble");
    }
    if cfg.projection_dim == 0 {
        violate(&mut v, "projection.dim", "need at least one projection time");
    }
    let times = cfg.times();
    if times.windows(2).any(|w| w[1] <= w[0])
        || times.iter().any(|&t| !(0.0..=1.0).contains(&t) || t == 0.0)
    {
        violate(&mut v, "projection.times", "times must be strictly increasing in (0, 1]");
    }
    if !cfg.projection_times.is_empty() && cfg.projection_times.len() != cfg.projection_dim {
        violate(&mut v, "projection.times", "explicit times must match projection.dim");
    }
    // rate experiments on LSV must respect 2 < p < 1/γ
    if let MapModel::Lsv { gamma } = cfg.map {
        let rate_kind = matches!(cfg.kind, ExperimentKind::WipRate | ExperimentKind::FastslowRate);
        if rate_kind && gamma >= 0.5 {
            violate(
                &mut v,
                "map.gamma",
                format!("order p must exceed 2 for rate experiments; 1/gamma = {} is too small", 1.0 / gamma),
            );
        }
    }
    if let DiffusionForm::Constant { c } = cfg.diffusion {
        if c <= 0.0 {
            violate(&mut v, "fastslow.b", "constant diffusion must be positive");
        }
    }
    if cfg.kind == ExperimentKind::FastslowRate
        && cfg.coupling != CouplingForm::Zero
        && cfg.drift_observable_base.is_none()
    {
        violate(&mut v, "fastslow.w", "drift coupling needs a drift observable (fastslow.w.base)");
    }
    if cfg.kind == ExperimentKind::RateTable && cfg.table_gammas.is_empty() && cfg.table_p.is_empty()
    {
        violate(&mut v, "table.gammas", "rate-table needs table.gammas or table.p");
    }
    if cfg.table_gammas.iter().any(|&g| !(0.0..0.5).contains(&g) || g == 0.0) {
        violate(&mut v, "table.gammas", "gamma values must lie in (0, 1/2)");
    }
    if cfg.table_p.iter().any(|&p| p <= 2.0) {
        violate(&mut v, "table.p", "p values must exceed 2");
    }
    v
}
