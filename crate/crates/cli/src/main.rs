//! `sddectl`: stationary PDFs, Monte Carlo ensembles, peak-drift
//! cancellation, and regime sweeps for delay-controlled scalar SDEs under
//! OU colored noise.
//!
//! Every command is deterministic given its configuration and seed, echoes
//! the fully-resolved configuration into the output directory, and exits
//! with 0 on success, 2 on validation errors, 3 on convergence failures,
//! and 4 on i/o errors.

use clap::{Args, Parser, Subcommand, ValueEnum};
use sdde_control::config::{presets, ModelConfig, Preset};
use sdde_control::csvio::{self, RegimeRow};
use sdde_control::error::ErrorKind;
use sdde_control::{
    analysis, fpe, mc, sweep, ClosureOrder, ControlParams, Error, FixedPointConfig,
    NoiseIntensity, QuadratureGrid, ScalarModel, StationaryPDF,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "sddectl", version, about)]
struct Cli {
    /// Worker threads for Monte Carlo paths and sweep cells (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve stationary PDFs (closure orders 0 and 2 plus the white-noise
    /// reference) and classify the response regime
    Pdf(PdfArgs),
    /// Run a Monte Carlo ensemble of the chosen stochastic equation
    Mc(McArgs),
    /// Choose the control shift that cancels the peak drift
    CancelDrift(CancelArgs),
    /// Sweep (a, tau, s_cor) and export the regime surface and boundaries
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Preset name ("bistable", "laser") or path to a model TOML file
    #[arg(long, default_value = "bistable")]
    model: String,
    /// Control gain a (overrides the config value)
    #[arg(long)]
    a: Option<f64>,
    /// Control delay tau
    #[arg(long)]
    tau: Option<f64>,
    /// Control shift xhat (default for presets: the desirable equilibrium)
    #[arg(long)]
    xhat: Option<f64>,
    /// Noise intensity sigma
    #[arg(long)]
    sigma: Option<f64>,
    /// OU correlation time s_cor
    #[arg(long)]
    scor: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClosureArg {
    #[value(name = "0")]
    M0,
    #[value(name = "2")]
    M2,
    Both,
}

#[derive(Args)]
struct PdfArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Closure order(s) to solve
    #[arg(long = "M", default_value = "both")]
    closure: ClosureArg,
    /// Quadrature grid nodes (odd)
    #[arg(long, default_value_t = sdde_control::quad::DEFAULT_GRID_NODES)]
    nodes: usize,
    /// Fixed-point tolerance on successive R iterates
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Maximum fixed-point iterations
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EquationArg {
    Sdde,
    Rescaled,
    Uncontrolled,
}

impl std::fmt::Display for EquationArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EquationArg::Sdde => "sdde",
            EquationArg::Rescaled => "rescaled",
            EquationArg::Uncontrolled => "uncontrolled",
        };
        write!(f, "{s}")
    }
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "sdde")]
    equation: EquationArg,
    /// Number of realizations
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// Time step (default: preset-specific)
    #[arg(long)]
    dt: Option<f64>,
    /// Final time (default: preset-specific)
    #[arg(long)]
    t_end: Option<f64>,
    /// Burn-in time discarded before sampling (default: preset-specific)
    #[arg(long)]
    burn_in: Option<f64>,
    /// Retain a sample every this many steps after burn-in
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Histogram bins over the model domain
    #[arg(long, default_value_t = 200)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial condition (default: the preset's desirable equilibrium)
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long, default_value = "heun")]
    integrator: String,
    /// Analytic PDF CSV to compare against (L1 distance)
    #[arg(long)]
    analytic: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CancelArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Desirable equilibrium to pin the density peak to (default: preset's)
    #[arg(long)]
    xa: Option<f64>,
    #[arg(long = "M", default_value = "2")]
    closure: ClosureArg,
    #[arg(long, default_value_t = sdde_control::quad::DEFAULT_GRID_NODES)]
    nodes: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Preset name (sweeps rebuild the model per cell)
    #[arg(long, default_value = "bistable")]
    model: String,
    /// Gain values as lo:hi:step or a single number
    #[arg(long, default_value = "0:4:0.1")]
    a: String,
    /// Delay values as lo:hi:step or a single number
    #[arg(long, default_value = "0.05:0.45:0.05")]
    tau: String,
    /// Correlation-time values as lo:hi:step or a single number
    #[arg(long, default_value = "0.1:0.5:0.05")]
    scor: String,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long = "M", default_value = "2")]
    closure: ClosureArg,
    /// Choose each cell's shift by peak-drift cancellation
    #[arg(long)]
    drift_cancel: bool,
    #[arg(long, default_value_t = sdde_control::quad::DEFAULT_GRID_NODES)]
    nodes: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: could not configure {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Pdf(args) => cmd_pdf(args),
        Command::Mc(args) => cmd_mc(args),
        Command::CancelDrift(args) => cmd_cancel_drift(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Convergence => 3,
                ErrorKind::Io => 4,
            })
        }
    }
}

/// Resolved model context: the model/control pair after overrides, plus the
/// preset defaults when the model came from one.
struct Resolved {
    model: ScalarModel,
    ctrl: ControlParams,
    preset: Option<Preset>,
}

fn resolve_model(args: &ModelArgs, allow_vanishing: bool) -> Result<Resolved, Error> {
    let (config, preset) = match presets::by_name(&args.model) {
        Some(p) => (
            ModelConfig::from_parts(&p.model, &ControlParams::uncontrolled()),
            Some(p),
        ),
        None => (ModelConfig::load(Path::new(&args.model))?, None),
    };
    let mut config = config;
    if let Some(sigma) = args.sigma {
        if config.noise.kind == "polynomial" {
            return Err(Error::invalid(
                "override",
                "--sigma cannot override a polynomial intensity",
            ));
        }
        config.noise.sigma = Some(sigma);
    }
    if let Some(scor) = args.scor {
        config.noise.s_cor = scor;
    }
    if let Some(a) = args.a {
        config.control.a = a;
    }
    if let Some(tau) = args.tau {
        config.control.tau = tau;
    }
    if let Some(xhat) = args.xhat {
        config.control.xhat = xhat;
    } else if args.xhat.is_none() && config.control.xhat == 0.0 {
        if let Some(p) = &preset {
            config.control.xhat = p.x_a;
        }
    }
    let (model, ctrl) = if allow_vanishing {
        config.build_for_simulation()?
    } else {
        config.build()?
    };
    Ok(Resolved {
        model,
        ctrl,
        preset,
    })
}

fn ensure_out_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Every command drops the fully-resolved configuration (model plus a
/// command-specific table) into the output directory.
fn write_config_echo(
    dir: &Path,
    model: &ScalarModel,
    ctrl: &ControlParams,
    section: &str,
    extra: toml::Table,
) -> Result<(), Error> {
    let mut text = ModelConfig::from_parts(model, ctrl).to_toml();
    if !extra.is_empty() {
        text.push_str(&format!("\n[{section}]\n"));
        text.push_str(&toml::to_string(&extra).expect("toml table serializes"));
    }
    let path = dir.join("config.toml");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn x_a_or(preset: &Option<Preset>, explicit: Option<f64>, what: &'static str) -> Result<f64, Error> {
    explicit.or(preset.as_ref().map(|p| p.x_a)).ok_or_else(|| {
        Error::invalid(what, "custom models need an explicit equilibrium (--xa / --x0)")
    })
}

fn regime_row(
    model: &ScalarModel,
    ctrl: &ControlParams,
    pdf: &StationaryPDF,
    report: &analysis::RegimeReport,
) -> RegimeRow {
    let sigma = match &model.intensity {
        NoiseIntensity::Additive { sigma } => *sigma,
        NoiseIntensity::LinearMultiplicative { sigma } => *sigma,
        NoiseIntensity::PolynomialIntensity { .. } => f64::NAN,
    };
    RegimeRow {
        a: ctrl.gain,
        tau: ctrl.delay,
        xhat: ctrl.shift,
        sigma,
        s_cor: model.s_cor,
        r_moment: pdf.r_moment,
        peak_x: pdf.argmax(),
        n_maxima: report.peak_locations.len(),
        n_inflections: report.inflection_count,
        label: report.label.to_string(),
    }
}

fn cmd_pdf(args: PdfArgs) -> Result<(), Error> {
    let resolved = resolve_model(&args.model, false)?;
    let (model, ctrl) = (&resolved.model, &resolved.ctrl);
    if let Some(p) = &resolved.preset {
        print_warnings(&sdde_control::model::timescale_warnings(model, ctrl, p.x_a));
    }
    ensure_out_dir(&args.out)?;
    let grid = QuadratureGrid::new(model.domain.lo, model.domain.hi, args.nodes)?;
    let sys = sdde_control::make_effective(model, ctrl)?;
    let cfg = FixedPointConfig {
        tol: args.tol,
        max_iter: args.max_iter,
        relaxation: 1.0,
    };

    let wn = fpe::solve_white_noise(&sys, &grid)?;
    wn.write_csv(&args.out.join("pdf_wn.csv"))?;

    let orders: &[ClosureOrder] = match args.closure {
        ClosureArg::M0 => &[ClosureOrder::M0],
        ClosureArg::M2 => &[ClosureOrder::M2],
        ClosureArg::Both => &[ClosureOrder::M0, ClosureOrder::M2],
    };
    let mut report_pdf = None;
    for &m in orders {
        let pdf = fpe::solve_stationary(&sys, m, &cfg, &grid)?;
        print_warnings(&pdf.warnings);
        pdf.write_csv(&args.out.join(format!("pdf_m{m}.csv")))?;
        println!(
            "M={m}: R = {:.6}, iterations = {}, peak at {:.6}",
            pdf.r_moment,
            pdf.iterations_used,
            pdf.argmax()
        );
        report_pdf = Some(pdf);
    }
    if let Some(pdf) = &report_pdf {
        let report = analysis::classify_regime(pdf)?;
        println!(
            "regime: {} ({} maxima, {} inflections)",
            report.label,
            report.peak_locations.len(),
            report.inflection_count
        );
        csvio::write_regime_rows(
            &args.out.join("regime.csv"),
            &[regime_row(model, ctrl, pdf, &report)],
        )?;
    }

    let mut extra = toml::Table::new();
    extra.insert("nodes".into(), (args.nodes as i64).into());
    extra.insert("tol".into(), args.tol.into());
    extra.insert("max_iter".into(), (args.max_iter as i64).into());
    write_config_echo(&args.out, model, ctrl, "pdf", extra)
}

fn cmd_mc(args: McArgs) -> Result<(), Error> {
    let resolved = resolve_model(&args.model, true)?;
    let (model, ctrl) = (&resolved.model, &resolved.ctrl);
    ensure_out_dir(&args.out)?;
    let x0 = x_a_or(&resolved.preset, args.x0, "x0")?;
    let (dt, t_end, burn_in) = match &resolved.preset {
        Some(p) => (
            args.dt.unwrap_or(p.mc_dt),
            args.t_end.unwrap_or(p.mc_t_end),
            args.burn_in.unwrap_or(p.mc_burn_in),
        ),
        None => (
            args.dt.ok_or_else(|| Error::invalid("mc", "custom models need --dt"))?,
            args.t_end
                .ok_or_else(|| Error::invalid("mc", "custom models need --t-end"))?,
            args.burn_in
                .ok_or_else(|| Error::invalid("mc", "custom models need --burn-in"))?,
        ),
    };
    let cfg = mc::MCConfig {
        dt,
        t_end,
        burn_in,
        n_paths: args.paths,
        seed: args.seed,
        histogram_bins: args.bins,
        sample_stride: args.stride,
        x0,
        integrator: args.integrator.parse()?,
    };
    let hist = match args.equation {
        EquationArg::Sdde => mc::simulate_sdde(model, ctrl, &cfg)?,
        EquationArg::Uncontrolled => {
            mc::simulate_sdde(model, &ControlParams::uncontrolled(), &cfg)?
        }
        EquationArg::Rescaled => mc::simulate_rescaled(model, ctrl, &cfg)?,
    };
    if hist.aborted_paths > 0 {
        eprintln!(
            "warning: {} path(s) hit the blow-up guard and were discarded",
            hist.aborted_paths
        );
    }
    let csv_path = args.out.join(format!("mc_{}.csv", args.equation));
    hist.write_csv(&csv_path)?;
    println!(
        "{}: {} samples from {} paths -> {}",
        args.equation,
        hist.n_samples,
        cfg.n_paths,
        csv_path.display()
    );

    if let Some(analytic_path) = &args.analytic {
        let analytic = StationaryPDF::read_csv(analytic_path)?;
        let l1 = mc::l1_analytic_vs_histogram(analytic.grid.nodes(), &analytic.density, &hist);
        if l1.disjoint_supports {
            eprintln!("warning: disjoint supports; L1 distance saturates at 1");
        }
        println!("L1(mc, analytic) = {:.6}", l1.distance);
        let l1_path = args.out.join("l1.csv");
        std::fs::write(
            &l1_path,
            format!(
                "analytic,l1\n{},{}\n",
                analytic_path.display(),
                csvio::fmt_f64(l1.distance)
            ),
        )
        .map_err(|e| Error::io(&l1_path, e))?;
    }

    let mut extra = toml::Table::new();
    extra.insert("equation".into(), args.equation.to_string().into());
    extra.insert("paths".into(), (args.paths as i64).into());
    extra.insert("dt".into(), dt.into());
    extra.insert("t_end".into(), t_end.into());
    extra.insert("burn_in".into(), burn_in.into());
    extra.insert("stride".into(), (args.stride as i64).into());
    extra.insert("bins".into(), (args.bins as i64).into());
    extra.insert("seed".into(), (args.seed as i64).into());
    extra.insert("x0".into(), x0.into());
    extra.insert("integrator".into(), args.integrator.clone().into());
    write_config_echo(&args.out, model, ctrl, "mc", extra)
}

fn cmd_cancel_drift(args: CancelArgs) -> Result<(), Error> {
    let resolved = resolve_model(&args.model, false)?;
    let model = &resolved.model;
    ensure_out_dir(&args.out)?;
    let x_a = x_a_or(&resolved.preset, args.xa, "xa")?;
    let gain = args.model.a.unwrap_or(1.0);
    let delay = args.model.tau.unwrap_or(0.1);
    let m = match args.closure {
        ClosureArg::M0 => ClosureOrder::M0,
        _ => ClosureOrder::M2,
    };
    let grid = QuadratureGrid::new(model.domain.lo, model.domain.hi, args.nodes)?;
    let cfg = FixedPointConfig {
        tol: args.tol,
        max_iter: args.max_iter,
        relaxation: 1.0,
    };
    let out = analysis::cancel_peak_drift(model, gain, delay, x_a, m, &cfg, &grid)?;
    print_warnings(&out.pdf.warnings);
    out.pdf.write_csv(&args.out.join("pdf_cancel.csv"))?;
    println!(
        "xhat = {:.6} (R = {:.6}, {} iterations); density peak at {:.6}, target {x_a}",
        out.xhat, out.pdf.r_moment, out.pdf.iterations_used, out.argmax
    );
    if !out.argmax_at_target {
        eprintln!(
            "warning: density argmax {} is not at the target equilibrium (label: {})",
            out.argmax, out.report.label
        );
    }
    let summary_path = args.out.join("cancel.csv");
    std::fs::write(
        &summary_path,
        format!(
            "xhat,R,iterations,argmax,grid_spacing,argmax_at_target,label\n{},{},{},{},{},{},{}\n",
            csvio::fmt_f64(out.xhat),
            csvio::fmt_f64(out.pdf.r_moment),
            out.pdf.iterations_used,
            csvio::fmt_f64(out.argmax),
            csvio::fmt_f64(grid.spacing()),
            out.argmax_at_target,
            out.report.label
        ),
    )
    .map_err(|e| Error::io(&summary_path, e))?;

    let ctrl = ControlParams::new(gain, delay, out.xhat)?;
    let mut extra = toml::Table::new();
    extra.insert("x_a".into(), x_a.into());
    extra.insert("nodes".into(), (args.nodes as i64).into());
    extra.insert("tol".into(), args.tol.into());
    write_config_echo(&args.out, model, &ctrl, "cancel_drift", extra)
}

fn parse_range(text: &str, what: &'static str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::invalid(what, format!("bad number '{s}' in '{text}'")))
    };
    match parts.as_slice() {
        [single] => Ok(vec![parse(single)?]),
        [lo, hi, step] => {
            let (lo, hi, step) = (parse(lo)?, parse(hi)?, parse(step)?);
            if !(step > 0.0 && hi >= lo) {
                return Err(Error::invalid(what, format!("bad range '{text}'")));
            }
            Ok(sweep::range_values(lo, hi, step))
        }
        _ => Err(Error::invalid(
            what,
            format!("expected 'value' or 'lo:hi:step', got '{text}'"),
        )),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Error> {
    let preset = presets::by_name(&args.model)
        .ok_or_else(|| Error::invalid("sweep", format!("unknown preset '{}'", args.model)))?;
    ensure_out_dir(&args.out)?;
    let spec = sweep::SweepSpec {
        preset: args.model.clone(),
        a_values: parse_range(&args.a, "a range")?,
        tau_values: parse_range(&args.tau, "tau range")?,
        scor_values: parse_range(&args.scor, "s_cor range")?,
        sigma: args.sigma,
        closure: match args.closure {
            ClosureArg::M0 => ClosureOrder::M0,
            _ => ClosureOrder::M2,
        },
        drift_cancel: args.drift_cancel,
        grid_nodes: args.nodes,
    };
    let started = Instant::now();
    let surface = sweep::run_sweep(&spec)?;
    let elapsed = started.elapsed().as_secs_f64();
    sweep::export_surface(&surface, &args.out, elapsed)?;
    println!(
        "{} cells ({} ok, {} skipped, {} failed) in {:.1}s -> {}",
        surface.cells.len(),
        surface.admissible,
        surface.skipped,
        surface.failed,
        elapsed,
        args.out.display()
    );
    for finding in &surface.findings {
        eprintln!("finding: {finding}");
    }

    let mut extra = toml::Table::new();
    extra.insert("sigma".into(), args.sigma.into());
    extra.insert("drift_cancel".into(), args.drift_cancel.into());
    extra.insert("nodes".into(), (args.nodes as i64).into());
    let ctrl = ControlParams::new(0.0, 0.0, preset.x_a)?;
    write_config_echo(&args.out, &preset.model, &ctrl, "sweep", extra)
}
