use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use prox_jed::fxp::solve_fixed_traced;
use prox_jed::harness::{
    hw_compare, run_sweep, timing_report, tune_rho, verify_theorems, write_svg, Arithmetic, PlotMetric,
    SweepConfig, TuneRequest, WORKERS_ENV,
};
use prox_jed::model::{
    gen_rayleigh_channel, random_data_vector, snr_to_n0, transmit, Constellation, ConstellationKind,
    TransmissionGroundTruth,
};
use prox_jed::prox::{Mode, ProxParams};
use prox_jed::rng;

#[derive(Parser)]
#[command(name = "prox-jed", version, about = "Joint channel estimation and data detection for large SIMO systems")]
struct Cli {
    /// Worker threads for Monte-Carlo runs.
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of a sweep configuration file.
#[derive(clap::Args)]
struct SweepArgs {
    /// TOML sweep configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated SNR points in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
}

impl SweepArgs {
    fn load(&self) -> prox_jed::Result<SweepConfig> {
        let mut cfg = SweepConfig::from_file(&self.config)?;
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(snr) = &self.snr {
            cfg.snr_db = snr.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ArithArg {
    Float,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Approx,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Approx => Mode::Approx,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo SER sweep; writes CSV, a JSON sidecar and optional SVG plots.
    Sweep {
        #[command(flatten)]
        args: SweepArgs,
        #[arg(long, value_enum)]
        arithmetic: Option<ArithArg>,
        /// Output CSV path.
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
        /// Also write `<stem>_uplink.svg` and `<stem>_downlink.svg`.
        #[arg(long)]
        plot: bool,
    },
    /// Convergence, boundary, gradient-identity and Neumann-bound suites.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Paired floating-point versus fixed-point comparison.
    HwCompare {
        #[command(flatten)]
        args: SweepArgs,
        /// SER at which the dB gap is reported.
        #[arg(long, default_value_t = 1e-2)]
        target: f64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Latency and throughput table.
    Timing {
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        t_max: Vec<usize>,
        /// Clock frequencies in MHz.
        #[arg(long, value_delimiter = ',', default_value = "358,341,297,240")]
        f_clk_mhz: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid search of rho and the alpha scale.
    Tune {
        #[arg(long, default_value_t = 16)]
        antennas: usize,
        #[arg(long, default_value_t = 16)]
        data_slots: usize,
        #[arg(long, default_value = "qpsk")]
        constellation: ConstellationKind,
        #[arg(long, value_enum, default_value = "exact")]
        mode: ModeArg,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        snr: f64,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        t_max: usize,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Cycle trace of the fixed-point array on one random block.
    Trace {
        #[arg(long, default_value_t = 8)]
        antennas: usize,
        #[arg(long, default_value_t = 2)]
        data_slots: usize,
        #[arg(long, default_value = "qpsk")]
        constellation: ConstellationKind,
        #[arg(long, allow_hyphen_values = true, default_value_t = 10.0)]
        snr: f64,
        #[arg(long, default_value_t = 1)]
        rho_log2: i32,
        #[arg(long, default_value_t = 1)]
        t_max: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        std::env::set_var(WORKERS_ENV, w.to_string());
    }
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> prox_jed::Result<bool> {
    match cmd {
        Command::Sweep { args, arithmetic, out, plot } => {
            let mut cfg = args.load()?;
            if let Some(a) = arithmetic {
                cfg.arithmetic = match a {
                    ArithArg::Float => Arithmetic::Float,
                    ArithArg::Fixed => Arithmetic::Fixed,
                };
            }
            let result = run_sweep(&cfg)?;
            result.save(&out)?;
            if plot {
                let stem = out.with_extension("");
                let stem = stem.to_string_lossy();
                write_svg(&result, &PathBuf::from(format!("{stem}_uplink.svg")), PlotMetric::Uplink)?;
                write_svg(&result, &PathBuf::from(format!("{stem}_downlink.svg")), PlotMetric::Downlink)?;
            }
            println!("method,snr_db,uplink_ser,downlink_ser,chest_mse");
            for r in &result.rows {
                println!("{},{},{:.3e},{:.3e},{:.3e}", r.method, r.snr_db, r.uplink_ser, r.downlink_ser, r.chest_mse);
            }
            Ok(true)
        }
        Command::Verify { seed, instances, json } => {
            let report = verify_theorems(seed, instances)?;
            println!("{}", report.summary());
            for v in &report.violations {
                println!("FAIL {} instance {} (seed {}): {}", v.suite, v.instance, v.seed, v.detail);
            }
            if let Some(p) = json {
                std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(report.passed())
        }
        Command::HwCompare { args, target, json } => {
            let cfg = args.load()?;
            let report = hw_compare(&cfg)?;
            println!("snr_db,agreement,float_ser,fixed_ser");
            for p in &report.points {
                println!("{},{:.6},{:.3e},{:.3e}", p.snr_db, p.agreement, p.float_ser, p.fixed_ser);
            }
            match report.db_gap(target) {
                Some(g) => println!("fixed-point loss at SER {target:e}: {g:.3} dB"),
                None => println!("curves do not cross SER {target:e} on this grid"),
            }
            if let Some(p) = json {
                std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(true)
        }
        Command::Timing { k, t_max, f_clk_mhz, out } => {
            let f: Vec<f64> = f_clk_mhz.iter().map(|m| m * 1e6).collect();
            let table = timing_report(&k, &t_max, &f);
            print!("{}", table.to_csv());
            if let Some(p) = out {
                table.write_csv(&p)?;
            }
            Ok(true)
        }
        Command::Tune { antennas, data_slots, constellation, mode, snr, trials, seed, t_max, cache } => {
            let req = TuneRequest {
                antennas,
                data_slots,
                constellation,
                mode: mode.into(),
                snr_db: snr,
                trials,
                seed,
                t_max,
            };
            let r = tune_rho(&req, cache.as_deref())?;
            println!(
                "rho_log2 = {}, alpha_scale = {} ({} errors; defaults: {}; of {} symbols)",
                r.rho_log2, r.alpha_scale, r.errors, r.default_errors, r.symbols
            );
            Ok(true)
        }
        Command::Trace { antennas, data_slots, constellation, snr, rho_log2, t_max, seed, out } => {
            let c = Constellation::of_kind(constellation);
            let mut r = rng::stream(seed);
            let h = gen_rayleigh_channel(antennas, &mut r)?;
            let s = random_data_vector(&c, data_slots, c.pilot(), &mut r)?;
            let blk = transmit(&TransmissionGroundTruth::new(s, h, snr_to_n0(snr, &c))?, &mut r)?;
            let params = ProxParams::default().with_rho_log2(rho_log2).with_t_max(t_max);
            let (_, trace) = solve_fixed_traced(&blk, &c, &params, c.pilot())?;
            match out {
                Some(p) => std::fs::write(p, trace.to_text())?,
                None => print!("{}", trace.to_text()),
            }
            Ok(true)
        }
    }
}
