//! Command-line front end.
//!
//! Each subcommand reads a [`RunConfig`], writes its outputs to the output
//! directory and a `<command>.json` manifest next to them. CSV files and the
//! loopback report depend only on the config and seed; wall time lives in the
//! manifest alone. Exit status: 0 success, 1 invalid input, 2 tolerance
//! breach.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use num_complex::Complex;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::channel::{sensing_scene, ChannelOperator, ChannelRealization};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimator::{estimate_targets, SearchGrid};
use crate::numerics::{add_noise, dft, noise_variance_for, QamConstellation, RandomSource};
use crate::otfs::{isfft, sfft, DdFrame};
use crate::scalar::{energy, max_abs_diff};
use crate::simkit::{ber_csv, rmse_csv, run_ber_sweep, run_hybrid_sweep, run_rmse_sweep};
use crate::waveform::Waveform;

/// Largest loopback or unitarity error the `loopback` command accepts.
pub const LOOPBACK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "otfs-isac", version, about = "OFDM/OTFS link simulator with delay-Doppler sensing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (`key = value` lines); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for Monte Carlo trials (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Add operation-count columns to the CSV output.
    #[arg(long, global = true)]
    pub counters: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Modem loopbacks and transform unitarity checks.
    Loopback,
    /// Sense the configured scene and list the detected targets.
    Estimate,
    /// Range/velocity RMSE versus SNR.
    Rmse,
    /// BER versus SNR for each waveform and terminal speed.
    Ber,
    /// Sense, select a waveform, then run its BER point.
    Hybrid,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Loopback => "loopback",
            Command::Estimate => "estimate",
            Command::Rmse => "rmse",
            Command::Ber => "ber",
            Command::Hybrid => "hybrid",
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    threads: Option<usize>,
    counters: bool,
    outputs: Vec<String>,
    rows: usize,
    status: &'a str,
    wall_time_s: f64,
}

/// What a subcommand produced.
struct Outcome {
    files: Vec<(String, String)>,
    rows: usize,
    tolerance_ok: bool,
    summary: String,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
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
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs the command; `Ok(false)` signals a tolerance breach.
pub fn execute(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    let start = Instant::now();
    let outcome = match cli.threads {
        Some(0) => return Err(Error::invalid("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(|| dispatch(cli.command, &cfg, cli.counters))?,
        None => dispatch(cli.command, &cfg, cli.counters)?,
    };
    let wall = start.elapsed().as_secs_f64();

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let serialized = cfg.serialize();
    let name = cli.command.name();
    let mut outputs = Vec::new();
    let mut write = |file: &str, body: &str| -> Result<()> {
        let path = dir.join(file);
        fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        outputs.push(file.to_string());
        Ok(())
    };
    write(&format!("{name}.cfg"), &serialized)?;
    for (file, body) in &outcome.files {
        write(file, body)?;
    }
    let manifest = Manifest {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_sha256: hex(&Sha256::digest(serialized.as_bytes())),
        threads: cli.threads,
        counters: cli.counters,
        outputs,
        rows: outcome.rows,
        status: if outcome.tolerance_ok { "pass" } else { "tolerance_breach" },
        wall_time_s: wall,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join(format!("{name}.json")), json + "\n")?;
    print!("{}", outcome.summary);
    println!("outputs in {}", dir.display());
    Ok(outcome.tolerance_ok)
}

fn dispatch(command: Command, cfg: &RunConfig, counters: bool) -> Result<Outcome> {
    match command {
        Command::Loopback => loopback(cfg),
        Command::Estimate => estimate(cfg),
        Command::Rmse => {
            let records = run_rmse_sweep(&cfg.plan()?)?;
            Ok(table("rmse.csv", rmse_csv(&records, counters), records.len()))
        }
        Command::Ber => {
            let records = run_ber_sweep(&cfg.plan()?)?;
            Ok(table("ber.csv", ber_csv(&records, counters), records.len()))
        }
        Command::Hybrid => {
            let records = run_hybrid_sweep(&cfg.plan()?)?;
            Ok(table("hybrid.csv", ber_csv(&records, counters), records.len()))
        }
    }
}

fn table(file: &str, csv: String, rows: usize) -> Outcome {
    Outcome {
        summary: format!("{rows} rows -> {file}\n"),
        files: vec![(file.to_string(), csv)],
        rows,
        tolerance_ok: true,
    }
}

fn loopback(cfg: &RunConfig) -> Result<Outcome> {
    let g = cfg.grid()?;
    let mut rng = RandomSource::new(cfg.seed, 0);
    let symbols: Vec<Complex<f64>> = (0..g.mn()).map(|_| rng.complex_gaussian(1.0)).collect();
    let channel = ChannelRealization::identity();

    let mut checks = Vec::new();
    for w in Waveform::ALL {
        let s = w.modulate(&symbols, &g)?;
        let r = ChannelOperator::new(&channel, &g, s.len())?.apply(&s);
        checks.push((format!("{}_loopback_max_error", w.name().to_lowercase()), max_abs_diff(&w.demodulate(&r, &g)?, &symbols)));
    }
    let dd = DdFrame::from_vec(g.m(), g.n(), symbols.clone())?;
    let tf = isfft(&dd);
    checks.push(("isfft_round_trip_max_error".into(), max_abs_diff(sfft(&tf).as_slice(), &symbols)));
    checks.push(("isfft_energy_rel_error".into(), (energy(tf.as_slice()) / energy(&symbols) - 1.0).abs()));
    let spectrum = dft(&symbols[..g.m()], false)?;
    checks.push(("dft_energy_rel_error".into(), (energy(&spectrum) / energy(&symbols[..g.m()]) - 1.0).abs()));

    let ok = checks.iter().all(|(_, e)| *e < LOOPBACK_TOLERANCE);
    let mut report = format!("grid m={} n={} cp_len={} seed={}\n", g.m(), g.n(), g.cp_len(), cfg.seed);
    for (name, err) in &checks {
        report.push_str(&format!("{name} = {err:e}\n"));
    }
    report.push_str(&format!("tolerance = {LOOPBACK_TOLERANCE:e}\nstatus = {}\n", if ok { "pass" } else { "fail" }));
    Ok(Outcome {
        summary: report.clone(),
        files: vec![("loopback.txt".into(), report)],
        rows: checks.len(),
        tolerance_ok: ok,
    })
}

fn estimate(cfg: &RunConfig) -> Result<Outcome> {
    let g = cfg.grid()?;
    let qam = QamConstellation::<f64>::new(cfg.modulation_order)?;
    let mut data = RandomSource::new(cfg.seed, 1);
    let bits = data.bits(g.mn() * cfg.modulation_order.trailing_zeros() as usize);
    let s = cfg.scene_waveform.modulate(&qam.map(&bits)?, &g)?;
    let targets = cfg.targets();
    // an empty scene is pure noise
    let echo = if targets.is_empty() {
        vec![Complex::new(0.0, 0.0); s.len()]
    } else {
        ChannelOperator::new(&sensing_scene(&targets, &g)?, &g, s.len())?.apply(&s)
    };
    let mut noise = RandomSource::new(cfg.seed, 2);
    let r = add_noise(&echo, noise_variance_for(&s, cfg.scene_snr_db)?, &mut noise);
    let found = estimate_targets(&r, &s, &SearchGrid::for_grid(&g), &g, &cfg.estimator)?;

    let mut csv = String::from("target_idx,gain_re,gain_im,delay_s,doppler_hz,range_m,velocity_mps,metric_peak,coarse_l,coarse_k\n");
    for (i, t) in found.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{}\n",
            t.gain.re, t.gain.im, t.delay_s, t.doppler_hz, t.range_m, t.velocity_mps, t.metric_peak, t.coarse_bins.0, t.coarse_bins.1
        ));
    }
    Ok(Outcome {
        summary: format!("{} targets -> estimate.csv\n", found.len()),
        files: vec![("estimate.csv".into(), csv)],
        rows: found.len(),
        tolerance_ok: true,
    })
}
