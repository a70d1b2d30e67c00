//! Command-line front end. Every command writes CSV, SVG and a JSON manifest
//! into an output directory; the manifest can be passed back through
//! `--config` to repeat the run.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{compare_controls, decay_fit, traverse_time, DecayFit};
use crate::continuum::{
    example_kernel, kernel_delta, sample_kernel, solve_continuum_kernels_with, ContinuumKernel, DEFAULT_ENSEMBLE_POINTS,
};
use crate::ensemble::{Grid1D, StateN, TriGrid};
use crate::error::{Error, Result};
use crate::io::{self, fmt_f64, CsvTable, KernelSidecar};
use crate::kernels::{kernel_residual, solve_exact_kernels_with, KernelsN, SolveOptions, DEFAULT_KERNEL_POINTS};
use crate::params::{
    example_params_continuum, example_params_n, interpolate_params, lift_params, load_params, param_error,
    ContinuumParams, ParamsN, BUILTIN_EXAMPLE,
};
use crate::plot::{LinePlot, Series};
use crate::simulate::{simulate, Controller, SimConfig, Trajectory, TrajectoryMeta, DEFAULT_SIM_POINTS};

const FORMATS_HELP: &str = "\
Output columns (floats carry 17 significant digits):
  kernels.csv      i, x, xi, k        (i = n+1 is the v kernel; lower triangle only)
  trajectory_*.csv t, U, e_norm
  snapshots_*.csv  t, i, x, value     (i = n+1 is v)
  controls.csv     n, controller, t, U
  profiles.csv     n, t, x, value     (last u channel)
  convergence.csv  n, delta_aggregate, delta_without_v, delta_e
  timing.csv       n, exact_seconds, sampled_seconds   (wall clock, not reproducible)
  param_error.csv  n, lambda, sigma, theta, w, q
  distances.csv    n, sup, l2

Exit codes: 0 success (a flagged unstable run is a success), 2 usage or
configuration error, 3 solver or I/O failure.";

const FIGURE_T_END: f64 = 10.0;
const FIGURE_STRIDE: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "continuum-backstep", version, about = "Backstepping kernels and closed-loop simulation for n+1 hyperbolic systems", after_long_help = FORMATS_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute control kernels and write them as CSV with a JSON report.
    Kernels(KernelsArgs),
    /// Simulate the plant under exact, sampled or zero control.
    Simulate(SimulateArgs),
    /// Compare exact and sampled kernels over a list of n.
    Convergence(ConvergenceArgs),
    /// Regenerate the data behind one of the standard figures.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    /// Solve the n+1 kernel equations.
    Exact,
    /// The continuum kernel itself, tabulated at n_y points in y.
    Continuum,
    /// Continuum kernel sampled at y = i/n.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Exact,
    Sampled,
    /// Open loop with U = 0.
    Zero,
}

impl ControllerKind {
    fn label(self) -> &'static str {
        match self {
            ControllerKind::Exact => "exact",
            ControllerKind::Sampled => "sampled",
            ControllerKind::Zero => "zero",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum Figure {
    #[value(name = "fig2")]
    #[serde(rename = "fig2")]
    Fig2,
    #[value(name = "fig3")]
    #[serde(rename = "fig3")]
    Fig3,
    #[value(name = "fig4")]
    #[serde(rename = "fig4")]
    Fig4,
    #[value(name = "fig5")]
    #[serde(rename = "fig5")]
    Fig5,
    #[value(name = "fig6")]
    #[serde(rename = "fig6")]
    Fig6,
    #[value(name = "fig7")]
    #[serde(rename = "fig7")]
    Fig7,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsArgs {
    /// JSON run configuration or a manifest from an earlier run.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Built-in parameter set name or path to a parameter JSON file.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid points per side of the triangle.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<KernelMode>,
    /// Ensemble resolution of numeric continuum kernels.
    #[arg(long)]
    pub n_y: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsConfig {
    pub params: String,
    pub n: Option<usize>,
    pub m: usize,
    pub mode: KernelMode,
    pub n_y: usize,
    pub out: PathBuf,
    pub parallel: bool,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<String>,
    /// Channel counts, e.g. `2,3,6` or `2-6`.
    #[arg(long, value_parser = parse_n_list)]
    pub n: Option<NList>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum)]
    pub controller: Option<ControllerKind>,
    /// Solve exact kernels on a grid this many times finer, then restrict.
    #[arg(long)]
    pub kernel_refine: Option<usize>,
    #[arg(long)]
    pub n_y: Option<usize>,
    /// Keep every k-th time step.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Times at which full-state snapshots are written.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<f64>>,
    /// Skip the SVG plots.
    #[arg(long)]
    #[serde(default)]
    pub no_plot: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub params: String,
    pub n: Vec<usize>,
    pub m: usize,
    pub t_end: f64,
    pub dt: Option<f64>,
    pub controller: ControllerKind,
    pub kernel_refine: usize,
    pub n_y: usize,
    pub stride: usize,
    pub snapshots: Vec<f64>,
    pub no_plot: bool,
    pub out: PathBuf,
    pub parallel: bool,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<String>,
    /// Channel counts, e.g. `2,4,8,16` or `2-16`.
    #[arg(long, value_parser = parse_n_list)]
    pub n: Option<NList>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub params: String,
    pub n: Vec<usize>,
    pub m: usize,
    pub out: PathBuf,
    pub parallel: bool,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub figure: Option<Figure>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceConfig {
    pub figure: Figure,
    pub out: PathBuf,
    pub parallel: bool,
}

/// A list of channel counts; deserializes from a JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NList(pub Vec<usize>);

pub fn parse_n_list(s: &str) -> std::result::Result<NList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.trim().parse().map_err(|_| format!("bad range start in {part:?}"))?;
            let b: usize = b.trim().parse().map_err(|_| format!("bad range end in {part:?}"))?;
            if a > b {
                return Err(format!("empty range {part:?}"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("not a channel count: {part:?}"))?);
        }
    }
    Ok(NList(out))
}

/// What every command writes next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest<C> {
    pub command: String,
    pub version: String,
    pub config: C,
    pub outputs: Vec<String>,
}

/// Errors that map to exit code 2 rather than 3.
fn is_usage_error(e: &Error) -> bool {
    !matches!(
        e,
        Error::KernelNonConvergence { .. }
            | Error::Io(_)
            | Error::NonPositiveNorm { .. }
            | Error::TooFewSamples { .. }
            | Error::TimeGridMismatch(_)
    )
}

pub fn run() -> ExitCode {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Kernels(a) => a.resolve().and_then(|c| cmd_kernels(&c)),
        Command::Simulate(a) => a.resolve().and_then(|c| cmd_simulate(&c)),
        Command::Convergence(a) => a.resolve().and_then(|c| cmd_convergence(&c)),
        Command::Reproduce(a) => a.resolve().and_then(|c| cmd_reproduce(&c)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 3 })
        }
    }
}

/// Reads `--config`: either a bare config object or a manifest whose
/// `command` must match.
fn read_config<A: for<'de> Deserialize<'de> + Default>(path: Option<&Path>, command: &str) -> Result<A> {
    let Some(path) = path else {
        return Ok(A::default());
    };
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let is_manifest = value.get("command").is_some() && value.get("config").is_some();
    let body = if is_manifest {
        let found = value["command"].as_str().unwrap_or_default();
        if found != command {
            return Err(Error::InvalidArgument(format!(
                "manifest {} belongs to `{found}`, not `{command}`",
                path.display()
            )));
        }
        value["config"].clone()
    } else {
        value
    };
    Ok(serde_json::from_value(body)?)
}

fn positive(name: &str, v: usize, min: usize) -> Result<usize> {
    if v < min {
        return Err(Error::InvalidArgument(format!(
            "--{name} must be at least {min}, got {v}"
        )));
    }
    Ok(v)
}

fn check_n_list(ns: &[usize]) -> Result<()> {
    if ns.is_empty() {
        return Err(Error::InvalidArgument("the n list is empty".into()));
    }
    for &n in ns {
        positive("n", n, 1)?;
    }
    Ok(())
}

impl KernelsArgs {
    pub fn resolve(self) -> Result<KernelsConfig> {
        let file: KernelsArgs = read_config(self.config.as_deref(), "kernels")?;
        let c = KernelsConfig {
            params: self.params.or(file.params).unwrap_or_else(|| BUILTIN_EXAMPLE.into()),
            n: self.n.or(file.n),
            m: self.m.or(file.m).unwrap_or(DEFAULT_KERNEL_POINTS),
            mode: self.mode.or(file.mode).unwrap_or(KernelMode::Exact),
            n_y: self.n_y.or(file.n_y).unwrap_or(DEFAULT_ENSEMBLE_POINTS),
            out: self.out.or(file.out).unwrap_or_else(|| "out/kernels".into()),
            parallel: self.parallel || file.parallel,
        };
        if let Some(n) = c.n {
            positive("n", n, 1)?;
        }
        positive("m", c.m, 3)?;
        positive("n-y", c.n_y, 2)?;
        Ok(c)
    }
}

impl SimulateArgs {
    pub fn resolve(self) -> Result<SimulateConfig> {
        let file: SimulateArgs = read_config(self.config.as_deref(), "simulate")?;
        let params = self.params.or(file.params).unwrap_or_else(|| BUILTIN_EXAMPLE.into());
        let n = match self.n.or(file.n) {
            Some(NList(v)) => v,
            None if params == BUILTIN_EXAMPLE => (2..=6).collect(),
            None => vec![load_params(&params, None)?.n()],
        };
        let c = SimulateConfig {
            params,
            n,
            m: self.m.or(file.m).unwrap_or(DEFAULT_SIM_POINTS),
            t_end: self.t_end.or(file.t_end).unwrap_or(20.0),
            dt: self.dt.or(file.dt),
            controller: self.controller.or(file.controller).unwrap_or(ControllerKind::Sampled),
            kernel_refine: self.kernel_refine.or(file.kernel_refine).unwrap_or(1),
            n_y: self.n_y.or(file.n_y).unwrap_or(DEFAULT_ENSEMBLE_POINTS),
            stride: self.stride.or(file.stride).unwrap_or(FIGURE_STRIDE),
            snapshots: self.snapshots.or(file.snapshots).unwrap_or_default(),
            no_plot: self.no_plot || file.no_plot,
            out: self.out.or(file.out).unwrap_or_else(|| "out/simulate".into()),
            parallel: self.parallel || file.parallel,
        };
        check_n_list(&c.n)?;
        positive("m", c.m, 3)?;
        positive("kernel-refine", c.kernel_refine, 1)?;
        positive("stride", c.stride, 1)?;
        positive("n-y", c.n_y, 2)?;
        if !(c.t_end > 0.0 && c.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "--t-end must be positive, got {}",
                c.t_end
            )));
        }
        Ok(c)
    }
}

impl ConvergenceArgs {
    pub fn resolve(self) -> Result<ConvergenceConfig> {
        let file: ConvergenceArgs = read_config(self.config.as_deref(), "convergence")?;
        let c = ConvergenceConfig {
            params: self.params.or(file.params).unwrap_or_else(|| BUILTIN_EXAMPLE.into()),
            n: self.n.or(file.n).map(|l| l.0).unwrap_or_else(|| vec![2, 4, 8, 16]),
            m: self.m.or(file.m).unwrap_or(DEFAULT_KERNEL_POINTS),
            out: self.out.or(file.out).unwrap_or_else(|| "out/convergence".into()),
            parallel: self.parallel || file.parallel,
        };
        check_n_list(&c.n)?;
        positive("m", c.m, 3)?;
        if c.params != BUILTIN_EXAMPLE {
            return Err(Error::InvalidArgument(format!(
                "convergence needs a parameter family over n; only `{BUILTIN_EXAMPLE}` provides one"
            )));
        }
        Ok(c)
    }
}

impl ReproduceArgs {
    pub fn resolve(self) -> Result<ReproduceConfig> {
        let file: ReproduceArgs = read_config(self.config.as_deref(), "reproduce")?;
        let figure = self
            .figure
            .or(file.figure)
            .ok_or_else(|| Error::InvalidArgument("missing figure id (fig2..fig7)".into()))?;
        let out = self
            .out
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from(format!("out/{}", figure_name(figure))));
        Ok(ReproduceConfig {
            figure,
            out,
            parallel: self.parallel || file.parallel,
        })
    }
}

fn figure_name(f: Figure) -> &'static str {
    match f {
        Figure::Fig2 => "fig2",
        Figure::Fig3 => "fig3",
        Figure::Fig4 => "fig4",
        Figure::Fig5 => "fig5",
        Figure::Fig6 => "fig6",
        Figure::Fig7 => "fig7",
    }
}

/// Collects output names and writes the manifest last.
struct OutDir {
    dir: PathBuf,
    outputs: Vec<String>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn file(&mut self, name: impl Into<String>) -> PathBuf {
        let name = name.into();
        let path = self.dir.join(&name);
        self.outputs.push(name);
        path
    }

    fn finish<C: Serialize>(mut self, command: &str, config: &C) -> Result<()> {
        let path = self.dir.join("manifest.json");
        self.outputs.sort();
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            outputs: self.outputs,
        };
        io::write_json(&path, &manifest)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

/// Continuum data for `pn`: the closed-form kernel for the built-in family,
/// otherwise a numeric kernel of the interpolated coefficients.
fn continuum_for(
    params: &str,
    pn: &ParamsN,
    n_y: usize,
    m: usize,
    opts: SolveOptions,
) -> Result<(ContinuumParams, ContinuumKernel)> {
    if params == BUILTIN_EXAMPLE {
        return Ok((example_params_continuum(), example_kernel()));
    }
    let pc = interpolate_params(pn, 0.0)?;
    let kc = solve_continuum_kernels_with(&pc, n_y, m, opts)?;
    Ok((pc, kc))
}

pub fn cmd_kernels(c: &KernelsConfig) -> Result<()> {
    let opts = SolveOptions { parallel: c.parallel };
    let pn = load_params(&c.params, c.n)?;
    let tri = TriGrid::new(c.m)?;
    let mut out = OutDir::create(&c.out)?;
    let (kn, sidecar) = match c.mode {
        KernelMode::Exact => {
            let kn = solve_exact_kernels_with(&pn, c.m, opts)?;
            let residual = kernel_residual(&kn, &pn)?;
            let side = KernelSidecar {
                n: pn.n(),
                m: c.m,
                mode: "exact".into(),
                params_hash: pn.content_hash(),
                max_abs: kn.max_abs(),
                provenance: None,
                residual: Some(residual),
                continuum_residual: None,
            };
            (kn, side)
        }
        KernelMode::Sampled => {
            let (_, kc) = continuum_for(&c.params, &pn, c.n_y, c.m, opts)?;
            let kn = sample_kernel(&kc, pn.n(), &tri)?;
            let side = KernelSidecar {
                n: pn.n(),
                m: c.m,
                mode: "sampled".into(),
                params_hash: pn.content_hash(),
                max_abs: kn.max_abs(),
                provenance: Some(kc.provenance()),
                residual: Some(kernel_residual(&kn, &pn)?),
                continuum_residual: None,
            };
            (kn, side)
        }
        KernelMode::Continuum => {
            let (pc, kc) = continuum_for(&c.params, &pn, c.n_y, c.m, opts)?;
            let kn = sample_kernel(&kc, c.n_y, &tri)?;
            let side = KernelSidecar {
                n: c.n_y,
                m: c.m,
                mode: "continuum".into(),
                params_hash: pn.content_hash(),
                max_abs: kn.max_abs(),
                provenance: Some(kc.provenance()),
                residual: None,
                continuum_residual: Some(crate::continuum::continuum_residual(&kc, &pc, c.m, c.n_y)?),
            };
            (kn, side)
        }
    };
    io::write_kernels_csv(&out.file("kernels.csv"), &kn)?;
    io::write_json(&out.file("kernels.json"), &sidecar)?;
    println!(
        "kernels: mode={:?} n={} m={} max|k|={}",
        c.mode,
        sidecar.n,
        c.m,
        fmt_f64(sidecar.max_abs)
    );
    out.finish("kernels", c)
}

/// Trajectory metadata plus the run verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    #[serde(flatten)]
    pub meta: TrajectoryMeta,
    /// Blow-up, or a final norm above the initial one.
    pub unstable: bool,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub final_time: f64,
    pub decay: Option<DecayFit>,
}

fn run_meta(tr: &Trajectory, pn: &ParamsN) -> RunMeta {
    let norms = tr.norms();
    let initial = norms.first().copied().unwrap_or(0.0);
    let last = norms.last().copied().unwrap_or(0.0);
    RunMeta {
        meta: tr.meta.clone(),
        unstable: tr.meta.blow_up.is_some() || last > initial,
        initial_norm: initial,
        final_norm: last,
        final_time: tr.times.last().copied().unwrap_or(0.0),
        decay: decay_fit(tr, traverse_time(pn)).ok(),
    }
}

/// Initial data `u_0^i = q_i`, `v_0 = 1`.
pub fn standard_initial_state(pn: &ParamsN, g: &Grid1D) -> StateN {
    StateN::from_fn(pn.n(), g, |i, _| pn.q()[i - 1], |_| 1.0)
}

/// Gain kernels of the requested kind on grid `g`.
pub fn controller_for(
    kind: ControllerKind,
    params: &str,
    pn: &ParamsN,
    g: &Grid1D,
    refine: usize,
    n_y: usize,
    opts: SolveOptions,
) -> Result<Controller> {
    Ok(match kind {
        ControllerKind::Zero => Controller::zero(),
        ControllerKind::Exact => Controller::gain(exact_gains(pn, g, refine, opts)?),
        ControllerKind::Sampled => {
            let (_, kc) = continuum_for(params, pn, n_y, g.m(), opts)?;
            Controller::gain(sample_kernel(&kc, pn.n(), &TriGrid::from_grid(g.clone()))?)
        }
    })
}

/// Exact kernels solved on a grid `refine` times finer than `g`, restricted to `g`.
pub fn exact_gains(pn: &ParamsN, g: &Grid1D, refine: usize, opts: SolveOptions) -> Result<KernelsN> {
    let fine = solve_exact_kernels_with(pn, (g.m() - 1) * refine + 1, opts)?;
    fine.restrict(g)
}

/// Settings shared by every run of one command.
struct RunSettings<'a> {
    params: &'a str,
    t_end: f64,
    dt: Option<f64>,
    stride: usize,
    refine: usize,
    n_y: usize,
    parallel: bool,
}

impl RunSettings<'_> {
    fn figure(stride: usize, parallel: bool) -> Self {
        RunSettings {
            params: BUILTIN_EXAMPLE,
            t_end: FIGURE_T_END,
            dt: None,
            stride,
            refine: 1,
            n_y: DEFAULT_ENSEMBLE_POINTS,
            parallel,
        }
    }

    fn run(&self, pn: &ParamsN, kind: ControllerKind, g: &Grid1D) -> Result<Trajectory> {
        let opts = SolveOptions {
            parallel: self.parallel,
        };
        let ctrl = controller_for(kind, self.params, pn, g, self.refine, self.n_y, opts)?;
        let mut cfg = SimConfig::new(self.t_end)
            .with_stride(self.stride)
            .with_tag(kind.label());
        cfg.dt = self.dt;
        cfg.parallel = self.parallel;
        simulate(pn, &ctrl, &standard_initial_state(pn, g), g, &cfg)
    }
}

pub fn cmd_simulate(c: &SimulateConfig) -> Result<()> {
    let g = Grid1D::new(c.m)?;
    let mut out = OutDir::create(&c.out)?;
    let label = c.controller.label();
    let settings = RunSettings {
        params: &c.params,
        t_end: c.t_end,
        dt: c.dt,
        stride: c.stride,
        refine: c.kernel_refine,
        n_y: c.n_y,
        parallel: c.parallel,
    };
    let mut u_plot = LinePlot::new(format!("U(t), {label} control"), "t", "U");
    let mut e_plot = LinePlot::new(format!("state norm, {label} control"), "t", "E-norm").log_y();
    for &n in &c.n {
        let pn = load_params(&c.params, Some(n))?;
        let tr = settings.run(&pn, c.controller, &g)?;
        let stem = format!("n{n}_{label}");
        io::write_trajectory_csv(&out.file(format!("trajectory_{stem}.csv")), &tr)?;
        if !c.snapshots.is_empty() {
            io::write_snapshots_csv(&out.file(format!("snapshots_{stem}.csv")), &tr, &c.snapshots)?;
        }
        let meta = run_meta(&tr, &pn);
        io::write_json(&out.file(format!("meta_{stem}.json")), &meta)?;
        println!(
            "n={n} controller={label} |s(0)|={} |s(T)|={} T={}{}",
            fmt_f64(meta.initial_norm),
            fmt_f64(meta.final_norm),
            meta.final_time,
            if meta.unstable { " unstable" } else { "" }
        );
        u_plot.push(Series::new(format!("n={n}"), tr.times.clone(), tr.controls.clone()));
        e_plot.push(Series::new(format!("n={n}"), tr.times.clone(), tr.norms()));
    }
    if !c.no_plot {
        u_plot.write(&out.file("controls.svg"))?;
        e_plot.write(&out.file("norms.svg"))?;
    }
    out.finish("simulate", c)
}

/// One row of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub delta_aggregate: f64,
    pub delta_without_v: f64,
    pub delta_e: f64,
    pub exact_seconds: f64,
    pub sampled_seconds: f64,
}

/// Exact versus sampled kernels of the built-in family for each `n`, with
/// wall-clock timings of both computations.
pub fn convergence_rows(ns: &[usize], m: usize, opts: SolveOptions) -> Result<Vec<ConvergenceRow>> {
    let tri = TriGrid::new(m)?;
    let kc = example_kernel();
    ns.iter()
        .map(|&n| {
            let pn = example_params_n(n)?;
            let t0 = Instant::now();
            let exact = solve_exact_kernels_with(&pn, m, opts)?;
            let exact_seconds = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let sampled = sample_kernel(&kc, n, &tri)?;
            let sampled_seconds = t1.elapsed().as_secs_f64();
            let d = kernel_delta(&exact, &sampled)?;
            Ok(ConvergenceRow {
                n,
                delta_aggregate: d.aggregate,
                delta_without_v: d.aggregate_without_v,
                delta_e: d.e_style,
                exact_seconds,
                sampled_seconds,
            })
        })
        .collect()
}

fn write_convergence(out: &mut OutDir, ns: &[usize], m: usize, parallel: bool) -> Result<Vec<ConvergenceRow>> {
    let rows = convergence_rows(ns, m, SolveOptions { parallel })?;
    let mut t = CsvTable::create(
        &out.file("convergence.csv"),
        &["n", "delta_aggregate", "delta_without_v", "delta_e"],
    )?;
    for r in &rows {
        t.row(&[
            r.n.to_string(),
            fmt_f64(r.delta_aggregate),
            fmt_f64(r.delta_without_v),
            fmt_f64(r.delta_e),
        ])?;
    }
    t.finish()?;
    let mut t = CsvTable::create(&out.file("timing.csv"), &["n", "exact_seconds", "sampled_seconds"])?;
    for r in &rows {
        t.row(&[r.n.to_string(), fmt_f64(r.exact_seconds), fmt_f64(r.sampled_seconds)])?;
    }
    t.finish()?;

    let pc = example_params_continuum();
    let g = Grid1D::new(m)?;
    let mut t = CsvTable::create(
        &out.file("param_error.csv"),
        &["n", "lambda", "sigma", "theta", "w", "q"],
    )?;
    for &n in ns {
        let e = param_error(&pc, &lift_params(&example_params_n(n)?), &g);
        t.row(&[
            n.to_string(),
            fmt_f64(e.lambda),
            fmt_f64(e.sigma),
            fmt_f64(e.theta),
            fmt_f64(e.w),
            fmt_f64(e.q),
        ])?;
    }
    t.finish()?;

    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let mut p = LinePlot::new("max over xi of |k~(1,xi) - k(1,xi)|", "n", "error").log_y();
    p.push(Series::new(
        "all channels",
        xs.clone(),
        rows.iter().map(|r| r.delta_aggregate).collect(),
    ));
    p.push(Series::new(
        "u channels",
        xs.clone(),
        rows.iter().map(|r| r.delta_without_v).collect(),
    ));
    p.write(&out.file("convergence.svg"))?;
    let mut p = LinePlot::new("kernel computation time", "n", "seconds");
    p.push(Series::new(
        "exact",
        xs.clone(),
        rows.iter().map(|r| r.exact_seconds).collect(),
    ));
    p.push(Series::new(
        "sampled",
        xs,
        rows.iter().map(|r| r.sampled_seconds).collect(),
    ));
    p.write(&out.file("timing.svg"))?;
    for r in &rows {
        println!(
            "n={} delta={} exact={:.3}s sampled={:.3}s",
            r.n,
            fmt_f64(r.delta_aggregate),
            r.exact_seconds,
            r.sampled_seconds
        );
    }
    Ok(rows)
}

pub fn cmd_convergence(c: &ConvergenceConfig) -> Result<()> {
    let mut out = OutDir::create(&c.out)?;
    write_convergence(&mut out, &c.n, c.m, c.parallel)?;
    out.finish("convergence", c)
}

fn controls_figure(
    out: &mut OutDir,
    ns: &[usize],
    kinds: &[ControllerKind],
    parallel: bool,
    title: &str,
) -> Result<Vec<Trajectory>> {
    let g = Grid1D::new(DEFAULT_SIM_POINTS)?;
    let mut t = CsvTable::create(&out.file("controls.csv"), &["n", "controller", "t", "U"])?;
    let mut plot = LinePlot::new(title, "t", "U");
    let mut runs = Vec::new();
    for &n in ns {
        let pn = example_params_n(n)?;
        for &kind in kinds {
            let tr = RunSettings::figure(FIGURE_STRIDE, parallel).run(&pn, kind, &g)?;
            for (time, u) in tr.times.iter().zip(&tr.controls) {
                t.row(&[n.to_string(), kind.label().into(), fmt_f64(*time), fmt_f64(*u)])?;
            }
            let label = if kinds.len() > 1 {
                format!("n={n} {}", kind.label())
            } else {
                format!("n={n}")
            };
            plot.push(Series::new(label, tr.times.clone(), tr.controls.clone()));
            runs.push(tr);
        }
    }
    t.finish()?;
    plot.write(&out.file("controls.svg"))?;
    Ok(runs)
}

/// Profiles of the last channel `u^n(t, ·)` at every saved time, plus its
/// outflow value `u^n(t, 1)` as a plot.
fn profiles_figure(out: &mut OutDir, ns: &[usize], parallel: bool) -> Result<()> {
    let g = Grid1D::new(DEFAULT_SIM_POINTS)?;
    let mut t = CsvTable::create(&out.file("profiles.csv"), &["n", "t", "x", "value"])?;
    let mut plot = LinePlot::new("last channel at the outflow, u^n(t, 1)", "t", "u^n(t,1)");
    for &n in ns {
        let pn = example_params_n(n)?;
        let tr = RunSettings::figure(5 * FIGURE_STRIDE, parallel).run(&pn, ControllerKind::Sampled, &g)?;
        let mut outflow = Vec::with_capacity(tr.len());
        for (time, s) in tr.times.iter().zip(&tr.states) {
            let u = s.u(n - 1);
            for (x, v) in g.points().iter().zip(u) {
                t.row(&[n.to_string(), fmt_f64(*time), fmt_f64(*x), fmt_f64(*v)])?;
            }
            outflow.push(u[u.len() - 1]);
        }
        plot.push(Series::new(format!("n={n}"), tr.times.clone(), outflow));
    }
    t.finish()?;
    plot.write(&out.file("profiles.svg"))
}

pub fn cmd_reproduce(c: &ReproduceConfig) -> Result<()> {
    let mut out = OutDir::create(&c.out)?;
    let sampled = [ControllerKind::Sampled];
    match c.figure {
        Figure::Fig2 => {
            controls_figure(
                &mut out,
                &[2, 3, 4, 5, 6],
                &sampled,
                c.parallel,
                "U(t) with sampled gains, n = 2..6",
            )?;
        }
        Figure::Fig3 => profiles_figure(&mut out, &[2, 3, 4, 5], c.parallel)?,
        Figure::Fig4 => {
            controls_figure(
                &mut out,
                &[6, 10, 15, 20],
                &sampled,
                c.parallel,
                "U(t) with sampled gains, n = 6, 10, 15, 20",
            )?;
        }
        Figure::Fig5 => {
            let ns: Vec<usize> = (2..=40).collect();
            write_convergence(&mut out, &ns, DEFAULT_KERNEL_POINTS, c.parallel)?;
        }
        Figure::Fig6 => profiles_figure(&mut out, &[6, 10, 15, 20], c.parallel)?,
        Figure::Fig7 => {
            let ns = [3, 5, 10, 20];
            let runs = controls_figure(
                &mut out,
                &ns,
                &[ControllerKind::Exact, ControllerKind::Sampled],
                c.parallel,
                "U(t), exact versus sampled gains",
            )?;
            let mut t = CsvTable::create(&out.file("distances.csv"), &["n", "sup", "l2"])?;
            for (n, pair) in ns.iter().zip(runs.chunks(2)) {
                let d = compare_controls(&pair[0], &pair[1])?;
                t.row(&[n.to_string(), fmt_f64(d.sup), fmt_f64(d.l2)])?;
                println!("n={n} sup|U_exact - U_sampled|={}", fmt_f64(d.sup));
            }
            t.finish()?;
        }
    }
    out.finish("reproduce", c)
}
