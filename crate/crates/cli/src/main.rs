use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use rotctl::angular::{Basis, BasisKind};
use rotctl::config::RunConfig;
use rotctl::model::{hamiltonian_z_full, MoleculeParams};
use rotctl::optim::quartic::ScalarCouplings;
use rotctl::optim::root_sensitivity_scan;
use rotctl::output::{self, fmt_num, key_values};
use rotctl::scenario::{self, PRESETS};
use rotctl::targets::{orientation_target, thermal_alignment_target};

#[derive(Parser)]
#[command(name = "rotctl", version, about = "Optimal control of molecular rotation with laser fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a field for a configured task and write convergence, field,
    /// dynamics and summary files.
    Optimize(RunArgs),
    /// Propagate without optimizing; checks the field-free revival.
    Propagate {
        #[command(flatten)]
        run: RunArgs,
        /// Use zero field instead of the configured guess.
        #[arg(long)]
        zero_field: bool,
    },
    /// Print a target state: `orientation j_f=4` or `thermal T=5 j_f=4`.
    Target {
        kind: String,
        /// key=value parameters
        params: Vec<String>,
        #[arg(long, default_value_t = 15)]
        j_max: u32,
    },
    /// Roots of the scalar quartic-penalty update cubic over (λ, x).
    ScanRoots {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e2, 1e4, 1e7])]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        x_min: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        x_max: f64,
        #[arg(long, default_value_t = 0.01)]
        x_step: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        reference: f64,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the shipped presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for λ scans.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl RunArgs {
    fn load(&self) -> rotctl::Result<RunConfig> {
        match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::from_path(path),
            (None, Some(name)) => scenario::preset(name),
            (None, None) => Err(rotctl::Error::Config("give --config or --preset".into())),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> rotctl::Result<()> {
    match command {
        Command::Optimize(args) => optimize(&args),
        Command::Propagate { run, zero_field } => propagate(&run, zero_field),
        Command::Target { kind, params, j_max } => target(&kind, &params, j_max),
        Command::ScanRoots {
            lambdas,
            x_min,
            x_max,
            x_step,
            reference,
            out,
        } => scan_roots(&lambdas, x_min, x_max, x_step, reference, out),
        Command::Presets => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn optimize(args: &RunArgs) -> rotctl::Result<()> {
    let cfg = args.load()?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    let stdout = Mutex::new(());
    let runs = scenario::run_batch(&cfg, Some(&out), args.threads, &|name, r| {
        let _guard = stdout.lock();
        println!(
            "{name} it {:4}  F {}  dC {:+.3e}  max|E| {:.3e}  fallback {}  {}",
            r.iteration,
            fmt_num(r.fidelity),
            r.delta_cost,
            r.max_field,
            r.fallback_events,
            if r.monotone { "ok" } else { "NON-MONOTONE" }
        );
    })?;
    for run in &runs {
        let s = &run.summary;
        print!(
            "{}",
            key_values(&[
                ("run", s.name.clone()),
                ("final fidelity", fmt_num(s.final_fidelity)),
                ("iterations", format!("{} ({:?})", s.iterations, s.stop)),
                ("max |E| [au]", fmt_num(s.max_abs_field_au)),
                ("monotone", s.monotone.to_string()),
                ("fallback fraction", format!("{:.4}", s.fallback_fraction)),
                ("post-pulse <cos^2>_p", fmt_num(s.post_pulse.cos2_permanent)),
                ("wall time [s]", format!("{:.1}", s.wall_time_s)),
            ])
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn propagate(args: &RunArgs, zero_field: bool) -> rotctl::Result<()> {
    let cfg = args.load()?;
    let params = cfg.params()?;
    let model = cfg.build_model(&params)?;
    let revival = scenario::revival_check(&model, cfg.time.n_steps)?;
    println!(
        "revival check: {} (max |psi(T_per) - psi(0)| = {:.3e}, tolerance {:.0e})",
        if revival.passed { "pass" } else { "FAIL" },
        revival.max_error,
        revival.tolerance
    );
    let obs = scenario::run_propagation(&cfg, zero_field, args.out.as_deref())?;
    print!(
        "{}",
        key_values(&[
            ("<cos>", fmt_num(obs.cos_theta)),
            ("<cos^2>", fmt_num(obs.alignment.total)),
            ("<cos^2>_p", fmt_num(obs.alignment.permanent)),
            ("<cos^2>_c", fmt_num(obs.alignment.coherent)),
            ("<Jz>/sqrt<J^2>", obs.jz_measure.map_or("undefined".into(), fmt_num)),
        ])
    );
    if let Some(dir) = &args.out {
        println!("wrote {}", dir.join(output::DYNAMICS_FILE).display());
    }
    Ok(())
}

fn parse_kv(params: &[String], key: &str) -> rotctl::Result<f64> {
    params
        .iter()
        .filter_map(|p| p.split_once('='))
        .find(|(k, _)| k.eq_ignore_ascii_case(key))
        .ok_or_else(|| rotctl::Error::Config(format!("missing `{key}=<value>`")))?
        .1
        .parse()
        .map_err(|_| rotctl::Error::Config(format!("`{key}` is not a number")))
}

fn target(kind: &str, params: &[String], j_max: u32) -> rotctl::Result<()> {
    let j_f = parse_kv(params, "j_f")? as u32;
    match kind {
        "orientation" => {
            let b = Basis::new(j_max, BasisKind::FixedM(0))?;
            let t = orientation_target(j_f, &b)?;
            println!("max <cos theta> within j <= {j_f}: {}", fmt_num(t.max_cos));
            for j in 0..=j_f {
                let i = b.index(j, 0).expect("j <= j_max");
                println!("  c_{j} = {:+.6}", t.state[i].re);
            }
        }
        "thermal" => {
            let temperature = parse_kv(params, "T")?;
            let b = Basis::full(j_max);
            let (_, r) = thermal_alignment_target(temperature, j_f, &b, &MoleculeParams::carbon_monoxide())?;
            println!("max <cos^2 theta>_p at T = {temperature} K, j_f = {j_f}: {:.4}", r.achieved_max);
            print!(
                "{}",
                key_values(&[
                    ("sum chi_k omega_k", fmt_num(r.achieved_max)),
                    ("partition function", fmt_num(r.partition_function)),
                    ("population in j <= j_f", fmt_num(r.trace_in_subspace)),
                    ("without parity split", fmt_num(r.unconstrained_max)),
                ])
            );
            for block in &r.blocks {
                println!("  {} j: contribution {}", block.parity, fmt_num(block.contribution));
            }
        }
        other => {
            return Err(rotctl::Error::Config(format!(
                "unknown target `{other}` (orientation or thermal)"
            )))
        }
    }
    Ok(())
}

fn scan_roots(
    lambdas: &[f64],
    x_min: f64,
    x_max: f64,
    x_step: f64,
    reference: f64,
    out: Option<PathBuf>,
) -> rotctl::Result<()> {
    if !(x_step > 0.0 && x_max >= x_min) {
        return Err(rotctl::Error::Config("need x_step > 0 and x_max >= x_min".into()));
    }
    let n = ((x_max - x_min) / x_step).round() as usize;
    let xs: Vec<f64> = (0..=n).map(|i| x_min + i as f64 * x_step).collect();
    let basis = Basis::new(15, BasisKind::FixedM(0))?;
    let model = hamiltonian_z_full(&MoleculeParams::carbon_monoxide(), &basis)?;
    let report = root_sensitivity_scan(ScalarCouplings::from_model(&model)?, lambdas, &xs, reference)?;
    let table = output::root_scan_table(&report);
    match out {
        Some(path) => {
            table.write(&path)?;
            for (l, lambda) in lambdas.iter().enumerate() {
                println!("lambda {lambda:e}: max |d root / dx| = {:.4e}", report.max_slope(l));
            }
            println!("wrote {}", path.display());
        }
        None => print!("{}", table.as_str()),
    }
    Ok(())
}
