//! Command-line front end: run configuration, output directories and the
//! four subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{
    critical_regions, grid_scan, w_split, write_heatmap, Field, HeatmapOptions, LandscapeMap,
    DEFAULT_CRITICAL_TOL,
};
use crate::model::{build_unit_cell, update_densities, Bounds, GeometryConfig, ParamPoint};
use crate::objective::{score, Evaluation, Evaluator, ObjectiveConfig};
use crate::optimizers::{
    gradient_check, jaya_run, ppo_es_run, read_history, synthetic_rollout, Algorithm, JayaConfig,
    OptRun, PolicyNet, PpoEsConfig,
};
use crate::rng;
use crate::transport::{homogeneous_check, McConfig};
use crate::xslib::{default_library_path, XsCache, XsLibrary};

pub const XS_PATH_ENV: &str = "MTRBENCH_XS_PATH";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandscapeConfig {
    pub resolution: [usize; 2],
    pub critical_tol: f64,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            resolution: [40, 40],
            critical_tol: DEFAULT_CRITICAL_TOL,
        }
    }
}

/// One JSON file describing a run. Relative `xs_library` paths are taken
/// relative to the config file; `output_dir` relative to the working
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// The library shipped with the crate when unset.
    pub xs_library: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub geometry: GeometryConfig,
    pub bounds: Bounds,
    pub mc: McConfig,
    pub objective: ObjectiveConfig,
    pub algorithm: Algorithm,
    pub jaya: JayaConfig,
    pub ppo_es: PpoEsConfig,
    pub landscape: LandscapeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            xs_library: None,
            output_dir: PathBuf::from("runs"),
            geometry: GeometryConfig::default(),
            bounds: Bounds::default(),
            mc: McConfig::default(),
            objective: ObjectiveConfig::default(),
            algorithm: Algorithm::Jaya,
            jaya: JayaConfig::default(),
            ppo_es: PpoEsConfig::default(),
            landscape: LandscapeConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads and validates a config. `MTRBENCH_XS_PATH`, when set, replaces
    /// `xs_library`. The returned config has an absolute library path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, path.parent().unwrap_or(Path::new(".")))
    }

    /// Like [`RunConfig::load`] for config text already in memory. `origin`
    /// only labels parse errors; relative library paths resolve against `base`.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            source,
        })?;
        cfg.xs_library = Some(match std::env::var_os(XS_PATH_ENV) {
            Some(p) if !p.is_empty() => PathBuf::from(p),
            _ => match &cfg.xs_library {
                Some(p) if p.is_relative() => base.join(p),
                Some(p) => p.clone(),
                None => default_library_path(),
            },
        });
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.bounds.validate()?;
        self.mc.validate()?;
        self.objective.validate()?;
        self.jaya.validate()?;
        self.ppo_es.validate()?;
        let [n_u, n_w] = self.landscape.resolution;
        if n_u < 2 || n_w < 2 {
            return Err(Error::InvalidConfig("landscape resolution must be at least 2x2".into()));
        }
        if !(self.landscape.critical_tol > 0.0) {
            return Err(Error::InvalidConfig("critical_tol must be > 0".into()));
        }
        let lib = self.xs_path();
        if !lib.is_file() {
            return Err(Error::InvalidConfig(format!(
                "xs_library '{}' does not exist",
                lib.display()
            )));
        }
        Ok(())
    }

    pub fn xs_path(&self) -> PathBuf {
        self.xs_library.clone().unwrap_or_else(default_library_path)
    }

    /// Applies one seed to the transport and both optimizers.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.mc.seed = seed;
        self.jaya.seed = seed;
        self.ppo_es.seed = seed;
        self
    }

    pub fn evaluator(&self, cache: &XsCache) -> Result<Evaluator> {
        let lib = cache.load(&self.xs_path())?;
        Evaluator::new(lib, &self.geometry, self.bounds, self.mc, self.objective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution(pub usize, pub usize);

impl std::str::FromStr for Resolution {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected NUxNW, got '{s}'"))?;
        let a: usize = a.trim().parse().map_err(|e| format!("'{a}': {e}"))?;
        let b: usize = b.trim().parse().map_err(|e| format!("'{b}': {e}"))?;
        Ok(Resolution(a, b))
    }
}

#[derive(Debug, Parser)]
#[command(name = "mtrbench", version, about = "MTR unit-cell optimization benchmark")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Run configuration (JSON).
    pub config: PathBuf,
    /// Seed for transport and optimizer; defaults to the config's mc.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parent directory for results (default: the config's output_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite an existing result directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an optimizer on the benchmark.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// jaya or ppo-es (default: the config's algorithm).
        #[arg(long)]
        algo: Option<Algorithm>,
    },
    /// Scan the (U, W) grid, find critical regions and draw heatmaps.
    Landscape {
        #[command(flatten)]
        common: Common,
        /// Grid size as NUxNW, e.g. 40x40.
        #[arg(long)]
        res: Option<Resolution>,
        /// |k - 1| threshold for critical cells.
        #[arg(long)]
        tol: Option<f64>,
        /// history.jsonl whose points are overlaid on the maps.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Re-render from an existing landscape.csv instead of scanning.
        #[arg(long)]
        from_csv: Option<PathBuf>,
    },
    /// Time model rebuild, in-place update and cached XS pipelines.
    BenchSpeedup {
        #[command(flatten)]
        common: Common,
        /// Evaluations per pipeline (at least 20).
        #[arg(long, default_value_t = 100)]
        evals: usize,
    },
    /// Run the built-in self checks.
    Validate {
        /// Run configuration (JSON).
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Runs a parsed command; `Ok(false)` means the work finished but a check or
/// evaluation failed.
pub fn run(cli: Cli) -> Result<bool> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidConfig("--threads must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Optimize { common, algo } => cmd_optimize(&common, algo),
        Command::Landscape {
            common,
            res,
            tol,
            history,
            from_csv,
        } => cmd_landscape(&common, res, tol, history.as_deref(), from_csv.as_deref()),
        Command::BenchSpeedup { common, evals } => cmd_bench_speedup(&common, evals),
        Command::Validate { config, seed } => cmd_validate(&config, seed),
    })
}

fn load(common: &Common) -> Result<(RunConfig, u64)> {
    let cfg = RunConfig::load(&common.config)?;
    let seed = common.seed.unwrap_or(cfg.mc.seed);
    Ok((cfg.with_seed(seed), seed))
}

/// Creates `parent/name`, refusing to reuse an existing directory unless
/// `force` is set.
pub fn prepare_run_dir(common: &Common, cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    let parent = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let dir = parent.join(name);
    if dir.exists() && !common.force {
        return Err(Error::InvalidConfig(format!(
            "{} already exists; pass --force to overwrite",
            dir.display()
        )));
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_optimize(common: &Common, algo: Option<Algorithm>) -> Result<bool> {
    let (mut cfg, seed) = load(common)?;
    let algo = algo.unwrap_or(cfg.algorithm);
    cfg.algorithm = algo;
    let dir = prepare_run_dir(common, &cfg, &format!("optimize-{}-seed{seed}", algo.tag()))?;
    let cache = XsCache::new();
    let evaluator = cfg.evaluator(&cache)?;
    let mut run = optimize(&cfg, &evaluator)?;
    run.config = serde_json::to_value(&cfg).expect("config serializes");
    run.write(&dir)?;
    match &run.best {
        Some(b) => println!(
            "{} seed {seed}: best U={:.4} W={:.4} k={:.5} flux={:.5} fitness={:.6} after {} evaluations",
            algo.tag(),
            b.eval.params.u_density,
            b.eval.params.w_density,
            b.eval.k,
            b.eval.fast_flux,
            b.eval.fitness,
            run.history.len()
        ),
        None => println!("{} seed {seed}: no successful evaluation", algo.tag()),
    }
    println!("results in {}", dir.display());
    if let Some(f) = &run.failure {
        eprintln!("run stopped early: {f}");
        return Ok(false);
    }
    Ok(true)
}

/// Runs the configured algorithm against `oracle`.
pub fn optimize(cfg: &RunConfig, oracle: &Evaluator) -> Result<OptRun> {
    match cfg.algorithm {
        Algorithm::Jaya => jaya_run(&cfg.jaya, oracle),
        Algorithm::PpoEs => ppo_es_run(&cfg.ppo_es, oracle),
    }
}

fn cmd_landscape(
    common: &Common,
    res: Option<Resolution>,
    tol: Option<f64>,
    history: Option<&Path>,
    from_csv: Option<&Path>,
) -> Result<bool> {
    let (cfg, seed) = load(common)?;
    let tol = tol.unwrap_or(cfg.landscape.critical_tol);
    let map = match from_csv {
        Some(path) => LandscapeMap::read_csv(path)?,
        None => {
            let Resolution(n_u, n_w) = res.unwrap_or(Resolution(
                cfg.landscape.resolution[0],
                cfg.landscape.resolution[1],
            ));
            let cache = XsCache::new();
            let evaluator = cfg.evaluator(&cache)?;
            let start = Instant::now();
            let map = grid_scan(&evaluator, n_u, n_w)?;
            eprintln!(
                "scanned {} cells in {:.1} s",
                n_u * n_w,
                start.elapsed().as_secs_f64()
            );
            map
        }
    };
    let name = format!("landscape-{}x{}-seed{seed}", map.n_u(), map.n_w());
    let dir = prepare_run_dir(common, &cfg, &name)?;
    map.write_csv(&dir.join("landscape.csv"))?;
    let report = critical_regions(&map, tol);
    let summary = serde_json::json!({
        "tolerance": report.tolerance,
        "component_count": report.component_count,
        "w_split": w_split(&report),
        "failed_cells": map.failed_cells(),
        "components": report.components,
    });
    write_json(&dir.join("critical_regions.json"), &summary)?;
    let overlay: Vec<ParamPoint> = match history {
        Some(p) => read_history(p)?.iter().map(|h| h.eval.params).collect(),
        None => Vec::new(),
    };
    for field in Field::ALL {
        let opts = HeatmapOptions {
            field,
            critical_tol: Some(tol),
            overlay: overlay.clone(),
        };
        write_heatmap(&map, &opts, &dir.join(format!("{}.svg", field.name())))?;
    }
    println!(
        "{} critical component(s) at tol {tol} on a {}x{} grid",
        report.component_count,
        map.n_u(),
        map.n_w()
    );
    for (n, c) in report.components.iter().enumerate() {
        println!(
            "  #{n}: {} cells, W in [{:.4}, {:.4}], best U={:.4} W={:.4} k={:.5} flux={:.5} fitness={:.6}",
            c.cells.len(),
            c.w_min,
            c.w_max,
            c.best.u,
            c.best.w,
            c.best.cell.k,
            c.best.cell.fast_flux,
            c.best.cell.fitness
        );
    }
    println!("results in {}", dir.display());
    Ok(map.failed_cells() == 0)
}

// ---------------------------------------------------------------------------
// Speed-up benchmark

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerPipeline {
    pub baseline: f64,
    pub update: f64,
    pub update_cache: f64,
}

impl PerPipeline {
    fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            baseline: f(self.baseline),
            update: f(self.update),
            update_cache: f(self.update_cache),
        }
    }
}

/// Per-evaluation wall times of the three pipelines.
///
/// The transport step does identical work in every pipeline (same model,
/// same seed), so per-evaluation times are estimated as the pipeline's median
/// setup time plus the median transport time pooled over all pipelines. The
/// directly measured medians are reported alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub evaluations: usize,
    pub baseline_ms: f64,
    pub update_ms: f64,
    pub update_cache_ms: f64,
    /// Times divided by `baseline_ms`.
    pub relative: PerPipeline,
    /// Median time spent loading the library and preparing the model.
    pub setup_us: PerPipeline,
    pub transport_ms: f64,
    pub measured_ms: PerPipeline,
    pub physics_identical: bool,
    pub library_parses: PerPipeline,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pipeline {
    Baseline,
    Update,
    UpdateCache,
}

/// Evaluates the same `n` random points through each pipeline, interleaved so
/// that slow drifts of the machine affect all three alike. Returns the report
/// and the evaluations of each pipeline.
pub fn bench_speedup(cfg: &RunConfig, n: usize, seed: u64) -> Result<(SpeedupReport, [Vec<Evaluation>; 3])> {
    if n < 20 {
        return Err(Error::InvalidConfig(format!("--evals must be >= 20, got {n}")));
    }
    let path = cfg.xs_path();
    let mc = McConfig { seed, ..cfg.mc };
    let mut rng = rng::stream(&[seed, 0xBE4C]);
    let b = cfg.bounds;
    let points: Vec<ParamPoint> = (0..n)
        .map(|_| ParamPoint::new(rng.gen_range(b.u_min..=b.u_max), rng.gen_range(b.w_min..=b.w_max)))
        .collect();

    let start_lib = XsLibrary::from_file(&path)?;
    let mut update_model = build_unit_cell(&cfg.geometry, &b, b.center(), &start_lib)?;
    let mut cache_model = update_model.clone();
    let cache = XsCache::new();
    cache.load(&path)?;
    let initial_parses = cache.parse_count();

    let order = [Pipeline::Baseline, Pipeline::Update, Pipeline::UpdateCache];
    let mut setup: [Vec<f64>; 3] = Default::default();
    let mut total: [Vec<f64>; 3] = Default::default();
    let mut transport = Vec::with_capacity(3 * n);
    let mut outputs: [Vec<Evaluation>; 3] = Default::default();
    let mut parses = [0usize; 3];

    for (i, &p) in points.iter().enumerate() {
        for r in 0..3 {
            let which = order[(i + r) % 3];
            let t0 = Instant::now();
            let mut fresh = None;
            let lib: Arc<XsLibrary>;
            let model = match which {
                Pipeline::Baseline => {
                    lib = Arc::new(XsLibrary::from_file(&path)?);
                    parses[0] += 1;
                    fresh.insert(build_unit_cell(&cfg.geometry, &b, p, &lib)?)
                }
                Pipeline::Update => {
                    lib = Arc::new(XsLibrary::from_file(&path)?);
                    parses[1] += 1;
                    update_densities(&mut update_model, p, &lib)?;
                    &update_model
                }
                Pipeline::UpdateCache => {
                    lib = cache.load(&path)?;
                    update_densities(&mut cache_model, p, &lib)?;
                    &cache_model
                }
            };
            let t1 = Instant::now();
            let mut e = score(p, model, &mc, &cfg.objective, i as u64)?;
            let t2 = Instant::now();
            drop(lib);
            let k = which as usize;
            e.wall_time_ms = (t2 - t0).as_secs_f64() * 1e3;
            setup[k].push((t1 - t0).as_secs_f64() * 1e6);
            total[k].push((t2 - t0).as_secs_f64() * 1e3);
            transport.push((t2 - t1).as_secs_f64() * 1e3);
            outputs[k].push(e);
        }
    }
    parses[2] = cache.parse_count() - initial_parses;

    let physics_identical = (0..n).all(|i| {
        outputs[0][i].same_physics(&outputs[1][i]) && outputs[0][i].same_physics(&outputs[2][i])
    });
    let transport_ms = median(&mut transport);
    let setup_us = PerPipeline {
        baseline: median(&mut setup[0]),
        update: median(&mut setup[1]),
        update_cache: median(&mut setup[2]),
    };
    let times = setup_us.map(|s| transport_ms + s * 1e-3);
    let report = SpeedupReport {
        evaluations: n,
        baseline_ms: times.baseline,
        update_ms: times.update,
        update_cache_ms: times.update_cache,
        relative: times.map(|t| t / times.baseline),
        setup_us,
        transport_ms,
        measured_ms: PerPipeline {
            baseline: median(&mut total[0]),
            update: median(&mut total[1]),
            update_cache: median(&mut total[2]),
        },
        physics_identical,
        library_parses: PerPipeline {
            baseline: parses[0] as f64,
            update: parses[1] as f64,
            update_cache: parses[2] as f64,
        },
    };
    Ok((report, outputs))
}

/// Table of relative running times.
pub fn speedup_table(r: &SpeedupReport) -> String {
    let mut s = String::new();
    writeln!(s, "{:<30} {:>12} {:>10} {:>12}", "pipeline", "ms/eval", "relative", "setup (us)").unwrap();
    let rows = [
        ("rebuild model + parse XS", r.baseline_ms, r.relative.baseline, r.setup_us.baseline),
        ("update model", r.update_ms, r.relative.update, r.setup_us.update),
        ("update model + XS in RAM", r.update_cache_ms, r.relative.update_cache, r.setup_us.update_cache),
    ];
    for (name, ms, rel, setup) in rows {
        writeln!(s, "{name:<30} {ms:>12.4} {:>9.4}% {setup:>12.2}", 100.0 * rel).unwrap();
    }
    writeln!(
        s,
        "transport median {:.4} ms over {} evaluations per pipeline; physics identical: {}",
        r.transport_ms, r.evaluations, r.physics_identical
    )
    .unwrap();
    s
}

fn cmd_bench_speedup(common: &Common, evals: usize) -> Result<bool> {
    let (cfg, seed) = load(common)?;
    if evals < 20 {
        return Err(Error::InvalidConfig(format!("--evals must be >= 20, got {evals}")));
    }
    let dir = prepare_run_dir(common, &cfg, &format!("bench-speedup-n{evals}-seed{seed}"))?;
    let (report, outputs) = bench_speedup(&cfg, evals, seed)?;
    write_json(&dir.join("speedup.json"), &report)?;
    let mut lines = String::new();
    for e in &outputs[0] {
        let mut v = serde_json::to_value(e).expect("evaluation serializes");
        v.as_object_mut().unwrap().remove("ms");
        writeln!(lines, "{v}").unwrap();
    }
    fs::write(dir.join("evaluations.jsonl"), lines).map_err(|e| Error::io(&dir, e))?;
    print!("{}", speedup_table(&report));
    println!("results in {}", dir.display());
    Ok(report.physics_identical
        && report.relative.update < 1.0
        && report.relative.update_cache < report.relative.update)
}

// ---------------------------------------------------------------------------
// Self checks

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Seeds of the homogeneous-medium checks run by `validate`.
pub const VALIDATE_ORACLE_SEEDS: u64 = 3;
pub const GRADIENT_TOL: f64 = 1e-4;

/// Library consistency, homogeneous-medium k against the closed form for
/// every material, and the policy-gradient check.
pub fn validate_checks(cfg: &RunConfig) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let lib = match XsLibrary::from_file(&cfg.xs_path()) {
        Ok(lib) => {
            out.push(CheckResult {
                name: "xs-consistency".into(),
                passed: true,
                detail: format!("{} materials, sha256 {}", lib.materials.len(), &lib.source_digest[..12]),
            });
            Some(lib)
        }
        Err(e) => {
            out.push(CheckResult {
                name: "xs-consistency".into(),
                passed: false,
                detail: e.to_string(),
            });
            None
        }
    };
    if let Some(lib) = &lib {
        for mat in lib.materials.values() {
            for s in 0..VALIDATE_ORACLE_SEEDS {
                let mc = cfg.mc.with_seed(rng::mix(&[cfg.mc.seed, s]));
                let name = format!("homogeneous-{}-{s}", mat.name);
                out.push(match homogeneous_check(mat, &mc) {
                    Ok(c) => CheckResult {
                        name,
                        passed: c.within(3.0),
                        detail: format!("k = {:.5} +/- {:.5}, kinf = {:.5}", c.k_mean, c.k_std, c.kinf),
                    },
                    Err(e) => CheckResult {
                        name,
                        passed: false,
                        detail: e.to_string(),
                    },
                });
            }
        }
    }
    let sizes = cfg.ppo_es.layer_sizes();
    let net = PolicyNet::random(
        &sizes,
        cfg.ppo_es.init_std.ln(),
        1.0,
        &mut rng::stream(&[cfg.ppo_es.seed, 0x6C]),
    );
    let rollout = synthetic_rollout(&net, 16, cfg.ppo_es.seed);
    let g = gradient_check(&net, &rollout, &cfg.ppo_es);
    out.push(CheckResult {
        name: "policy-gradient".into(),
        passed: g.max_rel_error < GRADIENT_TOL,
        detail: format!(
            "max relative error {:.3e}, max absolute error {:.3e} over {} parameters",
            g.max_rel_error, g.max_abs_error, g.n_params
        ),
    });
    out
}

fn cmd_validate(config: &Path, seed: Option<u64>) -> Result<bool> {
    // A broken library is a check failure, not a config error.
    let text = fs::read_to_string(config).map_err(|e| Error::io(config, e))?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: config.to_path_buf(),
        source,
    })?;
    let base = config.parent().unwrap_or(Path::new("."));
    cfg.xs_library = Some(match std::env::var_os(XS_PATH_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => match &cfg.xs_library {
            Some(p) if p.is_relative() => base.join(p),
            Some(p) => p.clone(),
            None => default_library_path(),
        },
    });
    let seed = seed.unwrap_or(cfg.mc.seed);
    let cfg = cfg.with_seed(seed);
    let checks = validate_checks(&cfg);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    Ok(failed == 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_parsing() {
        assert_eq!("40x40".parse::<Resolution>().unwrap(), Resolution(40, 40));
        assert_eq!("2X3".parse::<Resolution>().unwrap(), Resolution(2, 3));
        assert!("40".parse::<Resolution>().is_err());
        assert!("ax2".parse::<Resolution>().is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn config_defaults_and_unknown_fields() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
        let seeded = cfg.with_seed(9);
        assert_eq!((seeded.mc.seed, seeded.jaya.seed, seeded.ppo_es.seed), (9, 9, 9));
    }
}
