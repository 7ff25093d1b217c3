use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use cv2x_sim::channel::{noise_floor, LinkBudget};
use cv2x_sim::config::Config;
use cv2x_sim::engine::run_many;
use cv2x_sim::mac::CcMode;
use cv2x_sim::metrics::{fmt6, summarize, write_report};
use cv2x_sim::scenario::{deploy_scenario, LinkClass, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "cv2x-sim",
    version,
    about = "C-V2X sidelink Mode 4 urban simulator"
)]
struct Cli {
    /// Print the link budget for one link: distance in metres and a class
    /// (`los`, `building`, `truck`, `truck2`).
    #[arg(long, num_args = 2, value_names = ["DISTANCE_M", "CLASS"])]
    channel_probe: Option<Vec<String>>,

    /// Configuration file for `--channel-probe`.
    #[arg(long, requires = "channel_probe")]
    probe_config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation per seed and write pooled reports.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run seeds 0..N (overrides `sim.seeds`).
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        mcs: Option<u8>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = ["off", "drop", "power"])]
        cc_mode: Option<String>,
        /// Also write a gzip CSV event log per seed.
        #[arg(long)]
        event_log: bool,
        /// Also write the deployed nodes per seed.
        #[arg(long)]
        dump_scenario: bool,
    },
}

fn load(path: Option<&PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn probe(args: &[String], config: Option<&PathBuf>) -> Result<()> {
    let cfg = load(config)?;
    let d: f64 = args[0]
        .parse()
        .with_context(|| format!("bad distance `{}`", args[0]))?;
    if !(d.is_finite() && d >= 0.0) {
        bail!("distance must be a non-negative number");
    }
    let class = match args[1].as_str() {
        "los" => LinkClass::los(),
        "building" | "nlos_building" => LinkClass::building(),
        "truck" | "nlos_truck" => LinkClass::trucks(1),
        "truck2" => LinkClass::trucks(2),
        other => bail!("unknown link class `{other}` (los, building, truck, truck2)"),
    };
    let ch = &cfg.run.channel;
    let mcs = cfg.run.mcs()?;
    let noise = cv2x_sim::channel::noise_floor_dbm(mcs.message_bandwidth_hz(), ch.noise_figure_db);
    let b = LinkBudget::compute(
        cfg.scenario.tx_power_dbm,
        d,
        class,
        f64::NEG_INFINITY,
        noise,
        ch,
    );
    println!("distance_m        {}", fmt6(b.distance_m));
    println!("link_class        {:?}", b.link_class.kind);
    println!("path_loss_db      {}", fmt6(b.path_loss_db));
    println!("blockage_loss_db  {}", fmt6(b.blockage_loss_db));
    println!("rx_power_dbm      {}", fmt6(b.rx_power_dbm));
    println!(
        "noise_dbm         {} (MCS {} message, {} over the channel)",
        fmt6(b.noise_dbm),
        mcs.index,
        fmt6(noise_floor(ch))
    );
    println!("snr_db            {}", fmt6(b.sinr_db));
    println!(
        "decodes           {}",
        b.rx_power_dbm >= cfg.run.sim.rx_sensitivity_dbm && b.sinr_db >= mcs.sinr_threshold_db
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: Option<&PathBuf>,
    seeds: Option<u64>,
    mcs: Option<u8>,
    out: &Path,
    cc_mode: Option<&str>,
    event_log: bool,
    dump_scenario: bool,
) -> Result<()> {
    let mut cfg = load(config)?;
    if let Some(n) = seeds {
        if n == 0 {
            bail!("--seeds must be at least 1");
        }
        cfg.run.sim.seeds = (0..n).collect();
    }
    if let Some(m) = mcs {
        cfg.run.sim.mcs_index = m;
    }
    if let Some(mode) = cc_mode {
        cfg.run.congestion.mode = mode.parse::<CcMode>()?;
    }
    cfg.validate()?;

    let seeds = cfg.run.sim.seeds.clone();
    let outputs = run_many(&cfg.scenario, &cfg.run, &seeds)?;
    let reports: Vec<_> = outputs.iter().map(|o| o.report.clone()).collect();
    write_report(&reports, out)?;

    for o in &outputs {
        if event_log {
            o.log
                .write_gz(&out.join(format!("events_seed{}.csv.gz", o.seed)))?;
        }
        if dump_scenario {
            let sc = ScenarioConfig {
                rng_seed: o.seed,
                ..cfg.scenario.clone()
            };
            let path = out.join(format!("scenario_seed{}.csv", o.seed));
            let file =
                fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            deploy_scenario(&sc)?
                .write_csv(BufWriter::new(file))
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }

    let s = summarize(&reports);
    let show = |x: Option<f64>| x.map(fmt6).unwrap_or_else(|| "n/a".into());
    println!(
        "MCS {} | {} run(s) | {} vehicles | PDR>0.9: {} | min PDR: {} | mean latency: {} ms",
        cfg.run.sim.mcs_index,
        s.runs,
        s.vehicles,
        show(s.fraction_pdr_above_0_9),
        show(s.min_pdr),
        show(s.mean_latency_ms),
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match (&cli.channel_probe, &cli.command) {
        (Some(args), None) => probe(args, cli.probe_config.as_ref()),
        (
            None,
            Some(Command::Run {
                config,
                seeds,
                mcs,
                out,
                cc_mode,
                event_log,
                dump_scenario,
            }),
        ) => run(
            config.as_ref(),
            *seeds,
            *mcs,
            out,
            cc_mode.as_deref(),
            *event_log,
            *dump_scenario,
        ),
        (Some(_), Some(_)) => Err(anyhow::anyhow!(
            "--channel-probe cannot be combined with a subcommand"
        )),
        (None, None) => Err(anyhow::anyhow!(
            "nothing to do; try `cv2x-sim run --help` or `--channel-probe`"
        )),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
