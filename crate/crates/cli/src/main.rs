use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use micromaser::config::Config;
use micromaser::fano::Window;
use micromaser::statistics::{all_sequences, Model, StatReport};
use micromaser::steady::steady_state;
use micromaser::sweep::{run_sweep, trap_markers};
use micromaser::trajectory::{estimate, simulate, Observable};
use micromaser::verify::{monte_carlo_targets, verify, VerifyOptions};
use micromaser::{Channel, MaserError};

#[derive(Parser, Debug)]
#[command(name = "micromaser", version, about = "Detection statistics of the one-atom maser")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug)]
struct Common {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[arg(long, global = true)]
    nex: Option<f64>,
    #[arg(long, global = true)]
    nu: Option<f64>,
    /// Accumulated Rabi angle in radians
    #[arg(long, global = true, conflicts_with = "tint")]
    phi: Option<f64>,
    /// Interaction time in microseconds (with --g-khz)
    #[arg(long, global = true)]
    tint: Option<f64>,
    #[arg(long = "g-khz", global = true)]
    g_khz: Option<f64>,
    #[arg(long = "eta-a", global = true)]
    eta_a: Option<f64>,
    #[arg(long = "eta-b", global = true)]
    eta_b: Option<f64>,
    /// Sets both detector efficiencies
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long = "nmax-cap", global = true)]
    nmax_cap: Option<usize>,
    /// Integrator tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// time_integration, direct_solve or both
    #[arg(long, global = true)]
    method: Option<String>,
    /// cavity_decay (1/gamma) or atom_injection (1/r)
    #[arg(long = "time-unit", global = true)]
    time_unit: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "sigma-tint-us", global = true)]
    sigma_tint_us: Option<f64>,
    /// Write tabular output here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit
    #[arg(long = "dump-config", global = true)]
    dump_config: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Steady-state photon distribution
    Steady,
    /// Detection rates and atomic inversion
    Inversion,
    /// Fano-Mandel functions
    Fano {
        /// Observation windows in the configured time unit (repeatable);
        /// without any, Q(inf) and the window average are printed
        #[arg(long)]
        window: Vec<f64>,
    },
    /// Mean runs of successive detections
    Runs,
    /// Waiting times between detections
    Waiting,
    /// Detection-sequence probabilities
    Sequence {
        /// Sequence over {A, B}, first detection leftmost (repeatable)
        #[arg(long)]
        seq: Vec<String>,
        /// Print every sequence of this length
        #[arg(long)]
        length: Option<usize>,
    },
    /// Parameter sweep written as CSV
    Sweep {
        /// phi or t_int
        #[arg(long)]
        axis: Option<String>,
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        stop: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Comma-separated column names
        #[arg(long)]
        observables: Option<String>,
        #[arg(long = "gauss-points")]
        gauss_points: Option<usize>,
        /// Worker threads (0 = all cores)
        #[arg(long)]
        workers: Option<usize>,
        /// Fixed integration step in rt (deterministic across platforms)
        #[arg(long = "fixed-step")]
        fixed_step: Option<f64>,
        /// Trapping-state marker file; defaults to <out>.traps.csv
        #[arg(long)]
        markers: Option<PathBuf>,
    },
    /// Compare analytic values with a Monte-Carlo record
    McVerify {
        #[arg(long)]
        atoms: Option<usize>,
        /// Dump the record as `time outcome` lines
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Run the identity and oracle suite
    Verify {
        #[arg(long)]
        atoms: Option<usize>,
        /// Skip the Monte-Carlo checks
        #[arg(long = "no-mc")]
        no_mc: bool,
        /// Perturb the steady state (negative control)
        #[arg(long = "inject-fault")]
        inject_fault: bool,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<MaserError> for Failure {
    fn from(e: MaserError) -> Self {
        match e {
            MaserError::Config(_) | MaserError::InvalidParams(_) | MaserError::UnknownObservable(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Numerical(format!("i/o: {e}"))
    }
}

type CliResult<T> = Result<T, Failure>;

fn build_config(common: &Common, command: Option<&Command>) -> CliResult<Config> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    for s in &common.sets {
        config.set_assignment(s)?;
    }
    let mut set = |key: &str, value: Option<String>| -> CliResult<()> {
        if let Some(v) = value {
            config.set(key, &v)?;
        }
        Ok(())
    };
    let s = |v: Option<f64>| v.map(|x| x.to_string());
    set("n_ex", s(common.nex))?;
    set("nu", s(common.nu))?;
    set("g_khz", s(common.g_khz))?;
    set("phi", s(common.phi))?;
    set("t_int_us", s(common.tint))?;
    set("eta", s(common.eta))?;
    set("eta_a", s(common.eta_a))?;
    set("eta_b", s(common.eta_b))?;
    set("n_max_cap", common.nmax_cap.map(|v| v.to_string()))?;
    set("ode_tol", s(common.tol))?;
    set("method", common.method.clone())?;
    set("time_unit", common.time_unit.clone())?;
    set("seed", common.seed.map(|v| v.to_string()))?;
    set("sigma_tint_us", s(common.sigma_tint_us))?;
    if let Some(Command::Sweep {
        axis,
        start,
        stop,
        points,
        observables,
        gauss_points,
        workers,
        fixed_step,
        ..
    }) = command
    {
        set("axis", axis.clone())?;
        set("start", s(*start))?;
        set("stop", s(*stop))?;
        set("points", points.map(|v| v.to_string()))?;
        set("observables", observables.clone())?;
        set("gauss_points", gauss_points.map(|v| v.to_string()))?;
        set("workers", workers.map(|v| v.to_string()))?;
        set("fixed_step", s(*fixed_step))?;
    }
    if let Some(Command::McVerify { atoms, .. } | Command::Verify { atoms, .. }) = command {
        set("mc_atoms", atoms.map(|v| v.to_string()))?;
    }
    config.validate()?;
    Ok(config)
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn line(out: &mut String, name: &str, value: f64) {
    out.push_str(&format!("{name} {value:.12e}\n"));
}

fn report_lines(out: &mut String, r: &StatReport) {
    out.push_str(&format!(
        "{} raw {:.12e} uncorrelated {:.12e} normalized {:.12e}\n",
        r.name, r.raw, r.uncorrelated, r.normalized
    ));
}

fn header(config: &Config) -> String {
    let p = config.resolved_params();
    format!(
        "# n_ex {} nu {} phi {} eta_a {} eta_b {} time_unit {} method {}\n",
        p.n_ex,
        p.nu,
        p.phi,
        p.eta_a,
        p.eta_b,
        p.time_unit.name(),
        config.numerics.method.name()
    )
}

fn run(cli: &Cli) -> CliResult<bool> {
    let command = cli.command.as_ref();
    let config = build_config(&cli.common, command)?;
    if cli.common.dump_config {
        write_output(None, &config.dump())?;
        return Ok(true);
    }
    let Some(command) = command else {
        return Err(Failure::Config("a subcommand is required (see --help)".into()));
    };
    let out_path = cli.common.out.as_deref();
    let params = config.resolved_params();
    let mut out = header(&config);
    match command {
        Command::Steady => {
            let ss = steady_state(&params, &config.numerics)?;
            out.push_str(&format!(
                "# residual {:.3e} n_max {} mean_photons {:.12e}\nn,p\n",
                ss.residual,
                ss.n_max(),
                ss.dist.mean_photon_number()
            ));
            for (n, p) in ss.dist.weights().iter().enumerate() {
                out.push_str(&format!("{n},{p:.12e}\n"));
            }
        }
        Command::Inversion => {
            let m = Model::new(params, config.numerics)?;
            let r = m.detection_rates();
            let inv = m.atomic_inversion()?;
            line(&mut out, "r_a", r.r_a());
            line(&mut out, "r_b", r.r_b());
            line(&mut out, "p_a", r.p_a()?);
            line(&mut out, "p_b", r.p_b()?);
            line(&mut out, "inversion", inv.per_atom);
            line(&mut out, "inversion_tilde", inv.per_detection);
        }
        Command::Fano { window } => {
            let m = Model::new(params, config.numerics)?;
            for (name, ch) in [("q_a", Channel::A), ("q_b", Channel::B)] {
                if window.is_empty() {
                    line(&mut out, &format!("{name}_inf"), m.fano_mandel(ch, Window::Infinite)?);
                    let avg = m.fano_window_average(ch, config.fano_avg_start, config.fano_avg_stop, config.fano_avg_points)?;
                    line(&mut out, &format!("{name}_avg"), avg);
                } else {
                    let mut sorted = window.clone();
                    sorted.sort_by(f64::total_cmp);
                    for (t, q) in sorted.iter().zip(m.fano_series(ch, &sorted)?) {
                        line(&mut out, &format!("{name}@{t}"), q);
                    }
                }
            }
        }
        Command::Runs => {
            let m = Model::new(params, config.numerics)?;
            let sw = m.gamma_switch()?;
            line(&mut out, "gamma", sw.gamma);
            line(&mut out, "gamma_ordering_difference", sw.ordering_difference());
            let s = m.mean_successive()?;
            for r in [&s.n_a, &s.n_b, &s.n_mean] {
                report_lines(&mut out, r);
            }
        }
        Command::Waiting => {
            let m = Model::new(params, config.numerics)?;
            for r in m.waiting_times()?.reports() {
                report_lines(&mut out, r);
            }
        }
        Command::Sequence { seq, length } => {
            let m = Model::new(params, config.numerics)?;
            let mut list = seq.clone();
            if let Some(n) = length {
                if *n == 0 || *n > config.numerics.max_sequence_len {
                    return Err(Failure::Config(format!(
                        "length must lie in 1..={}",
                        config.numerics.max_sequence_len
                    )));
                }
                list.extend(all_sequences(*n));
            }
            if list.is_empty() {
                return Err(Failure::Config("give --seq or --length".into()));
            }
            out.push_str("sequence,probability\n");
            for s in list {
                let p = m.sequence_probability(&s)?;
                out.push_str(&format!("{},{:.12e}\n", p.sequence, p.value));
            }
        }
        Command::Sweep { markers, .. } => {
            let table = run_sweep(&config)?;
            write_output(out_path, &table.to_csv(&config))?;
            let marker_path = markers
                .clone()
                .or_else(|| out_path.map(|p| PathBuf::from(format!("{}.traps.csv", p.display()))));
            if let Some(mp) = marker_path {
                fs::write(mp, trap_markers(&config))?;
            }
            if table.failures() > 0 {
                eprintln!("{} of {} points failed; see the status column", table.failures(), table.rows.len());
                return Ok(false);
            }
            return Ok(true);
        }
        Command::McVerify { record, .. } => {
            let m = Model::new(params, config.numerics)?;
            let targets = monte_carlo_targets(&m)?;
            let rec = simulate(&params, config.mc_atoms, config.seed)?;
            if let Some(path) = record {
                let file = fs::File::create(path)?;
                rec.write_to(io::BufWriter::new(file))?;
            }
            let one_decay_time = params.time_unit.from_injection_time(params.n_ex, params.n_ex);
            let mut ok = true;
            out.push_str("observable,analytic,sampled,std_error,z,status\n");
            for (name, value) in targets {
                let obs = match name {
                    "Q_B(1/gamma)" => Observable::FanoB(one_decay_time),
                    other => Observable::parse(other)?,
                };
                let e = estimate(&rec, &obs)?;
                let z = e.z_score(value);
                let pass = z <= 3.0;
                ok &= pass;
                out.push_str(&format!(
                    "{name},{value:.12e},{:.12e},{:.6e},{z:.3},{}\n",
                    e.value,
                    e.std_error,
                    if pass { "pass" } else { "FAIL" }
                ));
            }
            write_output(out_path, &out)?;
            return Ok(ok);
        }
        Command::Verify { no_mc, inject_fault, .. } => {
            let options = VerifyOptions {
                mc_atoms: if *no_mc { 0 } else { config.mc_atoms },
                seed: config.seed,
                inject_fault: *inject_fault,
            };
            let report = verify(&config, &options)?;
            out.push_str(&format!("{report}\n"));
            write_output(out_path, &out)?;
            return Ok(report.passed());
        }
    }
    write_output(out_path, &out)?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
