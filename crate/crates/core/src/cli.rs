//! The `asiplab` command line.
//!
//! Every subcommand writes its records into `--out` together with a
//! `manifest-<command>.json` holding the resolved configuration, its sha256,
//! the crate version, the sha256 of each output file and the wall time.
//! Exit status is 0 on pass, 2 when a check fails and 1 on error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::coupling::{
    build_smoothing_v, default_delta, maximal_coupling_of, prokhorov_exact_small, smoothed_discrete_bound, total_variation,
    variance_matching_coupling, write_plan_csv, DiscreteDistribution, BRUTE_FORCE_LIMIT, DEFAULT_RESOLUTION,
};
use crate::covariance::{empirical_sigma2, spectral_sigma2, write_lags_csv, TailPolicy};
use crate::error::{Error, Result};
use crate::hypothesis::{h_decay_fit, random_configs};
use crate::models::{catalog, load_model_file, ProcessModel};
use crate::scheduler::{level_blocks, level_layout, optimal_beta, parse_rational, write_schedule_csv, Exponent, Rational, SchedulerParams};
use crate::spectral::{check_conditions_i, write_matrix_csv, OperatorFamily, DEFAULT_EPS0};
use crate::validator::{
    asip_pipeline_demo, block_maxima_test, clt_test, coboundary_probe, gap_sum_test, lp_scaling_test, CltConfig, NegligibilityConfig,
    PipelineConfig, TestReport,
};

pub const THREADS_ENV: &str = "ASIPLAB_THREADS";

#[derive(Debug, Parser, Serialize)]
#[command(name = "asiplab", version, about = "Transfer operators, limiting covariances, block schedules and coupling diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Output directory, created if missing.
    #[arg(long, default_value = "asiplab-out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
    /// Overrides the seed of the model file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SchedulerArgs {
    /// `2/3`, `0.5`, or `auto` / `auto:p=4` for `p/(2p-2)`.
    #[arg(long, default_value = "auto")]
    pub beta: String,
    #[arg(long, default_value = "1/20")]
    pub eps: String,
    /// Integrability exponent, `inf` for bounded observables.
    #[arg(long, default_value = "inf")]
    pub p: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Clt,
    Lp,
    Negligibility,
    Coboundary,
    All,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Sample one path `(A_0, ..., A_{n-1})`.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Spectral decomposition of `L_0` and the (I1)/(I2) sweep over `|t| <= eps0`.
    Spectrum {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS0)]
        eps0: f64,
        /// Overrides the truncation `K` of the model file.
        #[arg(long)]
        truncation: Option<usize>,
        /// Frequencies per axis on `[-eps0, eps0]`.
        #[arg(long, default_value_t = 9)]
        t_points: usize,
        #[arg(long, default_value_t = 64)]
        n_max: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Limiting covariance from the autocovariance series.
    Sigma2 {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Also estimate `cov(S_n)/n` by Monte Carlo.
        #[arg(long)]
        empirical: bool,
        #[arg(long, default_value_t = 1 << 14)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        replicas: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Exact (H) discrepancies against the gap `k` and their decay fit.
    CheckH {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS0)]
        eps0: f64,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
        #[arg(long, default_value_t = 16)]
        k_max: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Interval/gap decomposition of the levels `n..=to`.
    Schedule {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        to: Option<u32>,
        #[command(flatten)]
        sched: SchedulerArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Maximal coupling, Prokhorov distances and variance matching for the
    /// laws in a TOML input.
    Couple {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo validation suites.
    Validate {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// Restrict to one model; the default runs the built-in catalog.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long, default_value = "1/2")]
        beta: String,
        #[arg(long, default_value = "1/5")]
        eps: String,
        #[command(flatten)]
        common: Common,
    },
    /// End-to-end coupling pipeline with the fitted discrepancy exponent.
    DemoAsip {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        sched: SchedulerArgs,
        #[arg(long, default_value_t = 100)]
        replicas: usize,
        #[arg(long, default_value_t = 6)]
        min_level: u32,
        #[arg(long, default_value_t = 16)]
        max_level: u32,
        #[arg(long, default_value_t = 32)]
        bins: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize every report line found in the `*.jsonl` files of a directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Spectrum { .. } => "spectrum",
            Command::Sigma2 { .. } => "sigma2",
            Command::CheckH { .. } => "check-h",
            Command::Schedule { .. } => "schedule",
            Command::Couple { .. } => "couple",
            Command::Validate { .. } => "validate",
            Command::DemoAsip { .. } => "demo-asip",
            Command::Report { .. } => "report",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Spectrum { common, .. }
            | Command::Sigma2 { common, .. }
            | Command::CheckH { common, .. }
            | Command::Schedule { common, .. }
            | Command::Couple { common, .. }
            | Command::Validate { common, .. }
            | Command::DemoAsip { common, .. }
            | Command::Report { common, .. } => common,
        }
    }
}

/// Parse a `--beta` value. `auto` uses `p`, `auto:p=4` names it inline.
pub fn parse_beta(beta: &str, p: Exponent) -> Result<(Rational, Exponent)> {
    let beta = beta.trim();
    if let Some(rest) = beta.strip_prefix("auto") {
        let p = match rest.strip_prefix(":p=") {
            Some(v) => v.parse()?,
            None if rest.is_empty() => p,
            None => return Err(Error::InvalidParameter(format!("`{beta}`: expected `auto` or `auto:p=<p>`"))),
        };
        return Ok((optimal_beta(p)?.0, p));
    }
    Ok((parse_rational(beta)?, p))
}

fn scheduler_params(args: &SchedulerArgs) -> Result<SchedulerParams> {
    let (beta, p) = parse_beta(&args.beta, args.p.parse()?)?;
    SchedulerParams::with_exponent(beta, parse_rational(&args.eps)?, p)
}

/// Files written by one run, in order.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    /// Effective seed, once a command has resolved it.
    seed: Option<u64>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), seed: None })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn write_lines<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<()> {
        let mut w = self.create(name)?;
        for item in items {
            serde_json::to_writer(&mut w, item)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    fn digests(&self) -> Result<BTreeMap<String, String>> {
        self.files.iter().map(|f| Ok((f.clone(), sha256_hex(&std::fs::read(self.dir.join(f))?)))).collect()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub outputs: BTreeMap<String, String>,
    pub status: i32,
    pub wall_time_s: f64,
}

fn load(path: &Path) -> Result<ProcessModel> {
    if !path.exists() {
        return Err(Error::InvalidParameter(format!("model file {} does not exist", path.display())));
    }
    load_model_file(path).map(|(_, m)| m)
}

fn load_with_seed(path: &Path, seed: Option<u64>) -> Result<(ProcessModel, u64)> {
    if !path.exists() {
        return Err(Error::InvalidParameter(format!("model file {} does not exist", path.display())));
    }
    let (file, model) = load_model_file(path)?;
    Ok((model, seed.or(file.seed).unwrap_or(0)))
}

fn status(pass: bool) -> i32 {
    if pass {
        0
    } else {
        2
    }
}

fn matrix_value(m: &DMatrix<f64>) -> Value {
    if m.nrows() == 1 {
        json!(m[(0, 0)])
    } else {
        json!((0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
    }
}

fn simulate(model: &Path, n: usize, common: &Common, out: &mut Outputs) -> Result<i32> {
    let (model, seed) = load_with_seed(model, common.seed)?;
    out.seed = Some(seed);
    let path = model.simulate(n, seed)?;
    match common.format {
        Format::Csv => {
            let w = out.create("path.csv")?;
            path.write_csv(w)?;
        }
        Format::Jsonl => {
            let rows: Vec<&[f64]> = (0..path.len()).map(|k| path.row(k)).collect();
            out.write_lines("path.jsonl", &rows)?;
        }
    }
    println!("{} steps of {} (d = {}), hash {}", n, model.kind_name(), model.dim(), path.model_hash);
    Ok(0)
}

fn axis_grid(d: usize, eps0: f64, points: usize) -> Vec<Vec<f64>> {
    let points = points.max(2);
    let mut grid = Vec::new();
    for axis in 0..d {
        for i in 0..points {
            let mut t = vec![0.0; d];
            t[axis] = eps0 * (2.0 * i as f64 / (points - 1) as f64 - 1.0);
            grid.push(t);
        }
    }
    grid
}

fn spectrum(
    model: &Path,
    eps0: f64,
    truncation: Option<usize>,
    t_points: usize,
    n_max: usize,
    common: &Common,
    out: &mut Outputs,
) -> Result<i32> {
    let model = load(model)?;
    let family = OperatorFamily::with_options(&model, truncation, eps0)?;
    let report = check_conditions_i(&family, &axis_grid(model.dim(), eps0, t_points), n_max);
    match common.format {
        Format::Jsonl => out.write_lines("spectrum.jsonl", &report.records)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out.create("spectrum.csv")?);
            w.write_record(SPECTRUM_COLUMNS)?;
            for r in &report.records {
                w.write_record(spectrum_row(r))?;
            }
            w.flush()?;
        }
    }
    write_matrix_csv(&family.unperturbed(), out.create("operator_l0.csv")?)?;
    let summary = json!({
        "model": model.kind_name(),
        "basis_size": family.dim(),
        "lambda_re": report.lambda_re,
        "lambda_im": report.lambda_im,
        "kappa": report.kappa,
        "c_q": report.c_q,
        "nilpotency_index": report.nilpotency_index,
        "sup_norm": report.sup_norm,
        "n_max": report.n_max,
        "pass": report.pass,
    });
    out.write_json("conditions.json", &summary)?;
    println!("lambda = {:.12} kappa = {:.6} sup |L_t^n| = {:.6} pass = {}", report.lambda_re, report.kappa, report.sup_norm, report.pass);
    Ok(status(report.pass))
}

/// Spectral records flattened to CSV columns.
const SPECTRUM_COLUMNS: [&str; 6] = ["model", "t", "lambda_re", "lambda_im", "kappa", "sup_norm"];

fn spectrum_row(r: &crate::spectral::SpectralRecord) -> Vec<String> {
    let t = r.t.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
    let mut row = vec![r.model.clone(), t];
    row.extend([r.lambda_re, r.lambda_im, r.kappa, r.sup_norm].iter().map(|v| format!("{v:?}")));
    row
}

fn sigma2(model: &Path, tol: f64, empirical: bool, n: usize, replicas: usize, common: &Common, out: &mut Outputs) -> Result<i32> {
    let (model, seed) = load_with_seed(model, common.seed)?;
    out.seed = Some(seed);
    let series = spectral_sigma2(&model, TailPolicy { tol, ..TailPolicy::default() })?;
    let mut record = json!({
        "model": model.kind_name(),
        "Sigma2": matrix_value(&series.sigma2),
        "truncation_lag": series.truncation_lag,
        "tail_bound": series.tail_bound,
        "decay": series.decay,
        "delta": series.delta,
        "a": series.a,
    });
    if empirical {
        let est = empirical_sigma2(&model, n, replicas, seed)?;
        record["empirical"] = json!({
            "Sigma2": matrix_value(&est.estimate),
            "std_error": matrix_value(&est.std_error),
            "n": n,
            "replicas": replicas,
            "seed": seed,
        });
    }
    out.write_json("sigma2.json", &record)?;
    write_lags_csv(&series.lags, out.create("lags.csv")?)?;
    println!("{}", serde_json::to_string(&record)?);
    Ok(0)
}

fn check_h(model: &Path, eps0: f64, k_min: usize, k_max: usize, common: &Common, out: &mut Outputs) -> Result<i32> {
    let (model, seed) = load_with_seed(model, common.seed)?;
    out.seed = Some(seed);
    if k_min == 0 || k_max < k_min + 4 {
        return Err(Error::InvalidParameter("need 1 <= k_min and k_max >= k_min + 4".into()));
    }
    let family = OperatorFamily::with_options(&model, None, eps0)?;
    let template = random_configs(seed, model.dim(), eps0, 1, k_min).remove(0);
    let grid: Vec<usize> = (k_min..=k_max).collect();
    let report = h_decay_fit(&family, &template, &grid)?;
    match common.format {
        Format::Jsonl => out.write_lines("h_points.jsonl", &report.points)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out.create("h_points.csv")?);
            for p in &report.points {
                w.serialize(p)?;
            }
            w.flush()?;
        }
    }
    out.write_json("h_report.json", &json!({ "template": template, "report": report }))?;
    println!("(H) fit {:?} spectral rate {:.6} pass = {}", report.fit, report.spectral_rate, report.pass);
    Ok(status(report.pass))
}

fn schedule(n: u32, to: Option<u32>, sched: &SchedulerArgs, out: &mut Outputs) -> Result<i32> {
    let params = scheduler_params(sched)?;
    let last = to.unwrap_or(n);
    if last < n {
        return Err(Error::InvalidParameter(format!("--to {last} is below --n {n}")));
    }
    let mut blocks = Vec::new();
    let mut layouts = Vec::new();
    for level in n..=last {
        let layout = level_layout(level, &params)?;
        if let Some(reason) = &layout.reason {
            eprintln!("level {level}: single interval ({reason})");
        }
        blocks.extend(level_blocks(&layout));
        layouts.push(layout);
    }
    write_schedule_csv(&blocks, &params, out.create("schedule.csv")?)?;
    out.write_lines("levels.jsonl", &layouts)?;
    let covered: u64 = blocks.iter().map(|b| b.length).sum();
    println!("{} blocks covering {covered} indices (beta = {}, eps = {})", blocks.len(), params.beta, params.eps);
    Ok(0)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LawSpec {
    points: Vec<Vec<f64>>,
    masses: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VarianceSpec {
    cov_s: Vec<Vec<f64>>,
    cov_z: Vec<Vec<f64>>,
    delta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoupleInput {
    f: LawSpec,
    g: LawSpec,
    /// Smoothing scale for the bound through `V`; line only.
    eps0: Option<f64>,
    variance: Option<VarianceSpec>,
}

fn table(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParameter(format!("{what} must be a non-empty square table")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn couple(input: &Path, out: &mut Outputs) -> Result<i32> {
    let text = std::fs::read_to_string(input)?;
    let spec: CoupleInput = toml::from_str(&text)?;
    let f = DiscreteDistribution::new(spec.f.points, spec.f.masses)?;
    let g = DiscreteDistribution::new(spec.g.points, spec.g.masses)?;
    let (support, plan) = maximal_coupling_of(&f, &g)?;
    let (_, a, b) = f.aligned(&g)?;
    let mut record = json!({
        "support": support,
        "total_variation": total_variation(&a, &b)?,
        "mismatch": plan.mismatch(),
    });
    if support.len() <= BRUTE_FORCE_LIMIT {
        record["prokhorov_exact"] = json!(prokhorov_exact_small(&f, &g)?);
    }
    if let Some(eps0) = spec.eps0 {
        let v = build_smoothing_v(eps0, DEFAULT_RESOLUTION)?;
        record["prokhorov_smoothed_bound"] = json!(smoothed_discrete_bound(&f, &g, &v, 257)?);
        record["eta_v"] = json!(v.eta());
    }
    if let Some(var) = spec.variance {
        let cs = table(&var.cov_s, "cov_s")?;
        let cz = table(&var.cov_z, "cov_z")?;
        let delta = var.delta.unwrap_or_else(|| default_delta(&cs, &cz));
        let vm = variance_matching_coupling(&cs, &cz, delta)?;
        record["variance_matching"] = json!({
            "delta": delta,
            "mean_square_gap": vm.mean_square_gap(),
            "gain": matrix_value(&vm.gain),
        });
    }
    write_plan_csv(&plan, out.create("plan.csv")?)?;
    out.write_json("coupling.json", &record)?;
    println!("{}", serde_json::to_string(&record)?);
    Ok(0)
}

/// Suite sizes; kept small so the whole suite runs in seconds.
const CLT_N: usize = 1 << 10;
const CLT_REPLICAS: usize = 2000;
const MC_REPLICAS: usize = 100;

fn catalog_models() -> Vec<ProcessModel> {
    vec![catalog::iid_standard(1), catalog::doubling_cos(64), catalog::two_state()]
}

fn run_suite(
    suite: Suite,
    models: &[ProcessModel],
    params: &SchedulerParams,
    replicas: Option<usize>,
    seed: u64,
) -> Result<Vec<TestReport>> {
    let mut reports = Vec::new();
    let wants = |s: Suite| suite == Suite::All || suite == s;
    if wants(Suite::Clt) {
        for m in models {
            let series = spectral_sigma2(m, TailPolicy::default())?;
            let cfg = CltConfig::default();
            reports.push(clt_test(m, CLT_N, replicas.unwrap_or(CLT_REPLICAS), &series.sigma2, &series.a, seed, &cfg)?);
        }
    }
    if wants(Suite::Lp) {
        let ns: Vec<usize> = (8..=12).map(|k| 1usize << k).collect();
        for m in models {
            reports.push(lp_scaling_test(m, 3.0, &ns, replicas.unwrap_or(MC_REPLICAS), seed, &NegligibilityConfig::default())?);
        }
    }
    if wants(Suite::Negligibility) {
        let levels: Vec<u32> = (8..=14).filter(|&n| level_layout(n, params).map(|l| l.valid).unwrap_or(false)).collect();
        let ks: Vec<u64> = (8..=14).map(|n| 1u64 << n).collect();
        let cfg = NegligibilityConfig::default();
        for m in models {
            reports.push(gap_sum_test(m, params, &ks, replicas.unwrap_or(MC_REPLICAS), seed, &cfg)?);
            if levels.len() >= 2 {
                reports.push(block_maxima_test(m, params, &levels, replicas.unwrap_or(MC_REPLICAS), seed, &cfg)?);
            }
        }
    }
    if wants(Suite::Coboundary) {
        reports.push(coboundary_probe(&catalog::doubling_coboundary(16), 1 << 12, replicas.unwrap_or(16), seed, 1e-8)?);
    }
    Ok(reports)
}

fn write_reports(stem: &str, reports: &[TestReport], format: Format, out: &mut Outputs) -> Result<()> {
    match format {
        Format::Jsonl => out.write_lines(&format!("{stem}.jsonl"), reports),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out.create(&format!("{stem}.csv"))?);
            w.write_record(["name", "model", "statistic", "threshold", "pass", "replicas"])?;
            for r in reports {
                w.write_record([
                    r.name.clone(),
                    r.model.clone(),
                    format!("{:?}", r.statistic),
                    format!("{:?}", r.threshold),
                    r.pass.to_string(),
                    r.replicas.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn print_reports(reports: &[TestReport]) {
    for r in reports {
        println!(
            "{:<5} {:<20} {:<10} statistic {:.6} threshold {:.6}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.model,
            r.statistic,
            r.threshold
        );
    }
}

fn validate(
    suite: Suite,
    model: Option<&Path>,
    replicas: Option<usize>,
    beta: &str,
    eps: &str,
    common: &Common,
    out: &mut Outputs,
) -> Result<i32> {
    let (models, seed) = match model {
        Some(p) => {
            let (m, seed) = load_with_seed(p, common.seed)?;
            (vec![m], seed)
        }
        None => (catalog_models(), common.seed.unwrap_or(0)),
    };
    out.seed = Some(seed);
    let params = SchedulerParams::new(parse_beta(beta, Exponent::Infinite)?.0, parse_rational(eps)?)?;
    let reports = run_suite(suite, &models, &params, replicas, seed)?;
    write_reports("validate", &reports, common.format, out)?;
    print_reports(&reports);
    Ok(status(reports.iter().all(|r| r.pass)))
}

#[allow(clippy::too_many_arguments)]
fn demo_asip(
    model: &Path,
    sched: &SchedulerArgs,
    replicas: usize,
    min_level: u32,
    max_level: u32,
    bins: usize,
    common: &Common,
    out: &mut Outputs,
) -> Result<i32> {
    let (model, seed) = load_with_seed(model, common.seed)?;
    out.seed = Some(seed);
    let params = scheduler_params(sched)?;
    let cfg = PipelineConfig { min_level, max_level, replicas, bins, ..PipelineConfig::default() };
    let (report, outcome) = asip_pipeline_demo(&model, &params, seed, &cfg)?;
    write_reports("demo_asip", std::slice::from_ref(&report), common.format, out)?;
    let mut w = csv::Writer::from_writer(out.create("pipeline_levels.csv")?);
    for level in &outcome.levels {
        w.serialize(level)?;
    }
    w.flush()?;
    report.write_curve_csv("k", "sup_discrepancy", out.create("pipeline_curve.csv")?)?;
    println!(
        "exponent {:.4} (r^2 {:.3}) against lambda {:.4}; pass = {}",
        outcome.exponent, outcome.r_squared, outcome.lambda, report.pass
    );
    Ok(status(report.pass))
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    file: String,
    name: String,
    model: String,
    statistic: Option<f64>,
    threshold: Option<f64>,
    pass: bool,
}

fn report(dir: &Path, out: &mut Outputs) -> Result<i32> {
    let mut files: Vec<PathBuf> =
        std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "jsonl")).collect();
    files.sort();
    let mut rows = Vec::new();
    for path in &files {
        let text = std::fs::read_to_string(path)?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let Ok(v) = serde_json::from_str::<Value>(line) else { continue };
            let (Some(name), Some(pass)) = (v.get("name").and_then(Value::as_str), v.get("pass").and_then(Value::as_bool)) else {
                continue;
            };
            rows.push(SummaryRow {
                file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
                name: name.to_string(),
                model: v.get("model").and_then(Value::as_str).unwrap_or("").to_string(),
                statistic: v.get("statistic").and_then(Value::as_f64),
                threshold: v.get("threshold").and_then(Value::as_f64),
                pass,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidParameter(format!("no report lines found in {}", dir.display())));
    }
    let mut w = csv::Writer::from_writer(out.create("summary.csv")?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("{} reports, {} failed", rows.len(), failed);
    for r in rows.iter().filter(|r| !r.pass) {
        println!("FAIL {} {} ({})", r.name, r.model, r.file);
    }
    Ok(status(failed == 0))
}

fn dispatch(command: &Command, out: &mut Outputs) -> Result<i32> {
    match command {
        Command::Simulate { model, n, common } => simulate(model, *n, common, out),
        Command::Spectrum { model, eps0, truncation, t_points, n_max, common } => {
            spectrum(model, *eps0, *truncation, *t_points, *n_max, common, out)
        }
        Command::Sigma2 { model, tol, empirical, n, replicas, common } => sigma2(model, *tol, *empirical, *n, *replicas, common, out),
        Command::CheckH { model, eps0, k_min, k_max, common } => check_h(model, *eps0, *k_min, *k_max, common, out),
        Command::Schedule { n, to, sched, .. } => schedule(*n, *to, sched, out),
        Command::Couple { input, .. } => couple(input, out),
        Command::Validate { suite, model, replicas, beta, eps, common } => {
            validate(*suite, model.as_deref(), *replicas, beta, eps, common, out)
        }
        Command::DemoAsip { model, sched, replicas, min_level, max_level, bins, common } => {
            demo_asip(model, sched, *replicas, *min_level, *max_level, *bins, common, out)
        }
        Command::Report { dir, .. } => report(dir, out),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    // a pool built earlier in the process (tests) keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Run a parsed command and write its manifest.
pub fn execute(cli: &Cli) -> Result<i32> {
    configure_threads()?;
    let start = Instant::now();
    let common = cli.command.common();
    let mut out = Outputs::new(&common.out)?;
    let code = dispatch(&cli.command, &mut out)?;
    let config = serde_json::to_value(&cli.command)?;
    let config_sha256 = sha256_hex(serde_json::to_string(&config)?.as_bytes());
    let manifest = Manifest {
        command: cli.command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        config_sha256,
        seed: out.seed.or(common.seed),
        outputs: out.digests()?,
        status: code,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let name = format!("manifest-{}.json", cli.command.name());
    let mut w = BufWriter::new(File::create(out.dir.join(name))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(code)
}

/// Entry point for the binary: parse, run, map errors to exit status 1.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_forms() {
        assert_eq!(parse_beta("2/3", Exponent::Infinite).unwrap().0, Rational::new(2, 3));
        assert_eq!(parse_beta("auto", Exponent::Infinite).unwrap().0, Rational::new(1, 2));
        let (b, p) = parse_beta("auto:p=4", Exponent::Infinite).unwrap();
        assert_eq!((b, p), (Rational::new(2, 3), Exponent::Finite(Rational::from_integer(4))));
        assert!(parse_beta("auto:q=4", Exponent::Infinite).is_err());
        assert!(parse_beta("two thirds", Exponent::Infinite).is_err());
    }

    #[test]
    fn unknown_command_is_an_error() {
        assert_eq!(run(["asiplab", "frobnicate"]), 1);
        assert_eq!(run(["asiplab", "schedule"]), 1);
    }
}
