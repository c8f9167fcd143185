mod config;
mod matrix;
mod validate;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use marc_core::channel::{ChannelRealization, MarcConfig};
use marc_core::linalg::CMatrix;
use marc_core::rates::{
    decision_time_from, outage_indicator, subset_capacities, DecoderKind, RateRegionSpec, Scheme,
};
use marc_core::sim::{run_coded_bler, run_outage, write_outputs, Manifest, SimMode, SimPlan};

use config::FileConfig;

/// Simulation and analysis of lattice-coded multiple-access relay channels.
#[derive(Debug, Parser)]
#[command(name = "marc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Theoretical outage probability over an SNR grid.
    Outage(SimArgs),
    /// Coded block-error rate over an SNR grid.
    Codec(SimArgs),
    /// Outage verdict for explicit channel matrices.
    Region(ChannelArgs),
    /// Relay decision slot for explicit channel matrices.
    DecisionTime(ChannelArgs),
    /// Run oracle checks.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Flat TOML file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the plan stored in a run manifest instead of the defaults.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    snr_from: Option<f64>,
    #[arg(long)]
    snr_to: Option<f64>,
    #[arg(long)]
    snr_step: Option<f64>,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    decoder: Option<DecoderKind>,
    /// Worker threads, 0 for one per core.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, env = "MARC_OUT_DIR", default_value = "runs")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ChannelArgs {
    /// Destination matrices: one block per user, then the relay block.
    #[arg(long)]
    hd: PathBuf,
    /// Relay matrices: one block per user.
    #[arg(long)]
    hr: PathBuf,
    /// Comma-separated per-user rates in bits per channel use.
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    /// Relay codebook rate; defaults to the sum rate.
    #[arg(long)]
    relay_rate: Option<f64>,
    #[arg(long, default_value = "omlc")]
    scheme: Scheme,
    #[arg(long, default_value = "kstage")]
    decoder: DecoderKind,
    /// Destination and relay SNR in dB.
    #[arg(long, default_value_t = 20.0)]
    snr_db: f64,
    /// Extra SNR on the source-relay links in dB.
    #[arg(long, default_value_t = 10.0)]
    sr_offset_db: f64,
    #[arg(long, default_value_t = 2)]
    slots: usize,
    #[arg(long, default_value_t = 2)]
    slot_len: usize,
    #[arg(long)]
    silent_relay_is_outage: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(value_enum, default_value = "all")]
    suite: validate::Suite,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Nesting ratio of the small codes in the exhaustive mapper check.
    #[arg(long, default_value_t = 2)]
    exhaustive_tau: u64,
    /// Corrupt the GDFE factor before checking it.
    #[arg(long, hide = true)]
    break_gdfe: bool,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl ToString) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Outage(args) => simulate(SimMode::Outage, args),
        Command::Codec(args) => simulate(SimMode::Coded, args),
        Command::Region(args) => region(args, false),
        Command::DecisionTime(args) => region(args, true),
        Command::Validate(args) => run_validate(args),
    }
}

fn flag_layer(args: &SimArgs) -> FileConfig {
    FileConfig {
        seed: args.seed,
        trials: args.trials,
        snr_from: args.snr_from,
        snr_to: args.snr_to,
        snr_step: args.snr_step,
        scheme: args.scheme,
        decoder: args.decoder,
        threads: args.threads,
        ..FileConfig::default()
    }
}

/// Defaults (or a replayed manifest), then the config file, then flags.
fn resolve_plan(mode: SimMode, args: &SimArgs) -> Result<SimPlan, Failure> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path).map_err(Failure::Usage)?,
        None => FileConfig::default(),
    };
    let layer = file.overlay(flag_layer(args));
    let base = match (&args.replay, mode) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
            let manifest: Manifest = serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("malformed manifest {}: {e}", path.display())))?;
            if manifest.plan.mode != mode {
                return Err(Failure::Usage(format!("manifest {} is for a {} run", path.display(), manifest.plan.mode)));
            }
            manifest.plan
        }
        (None, SimMode::Outage) => SimPlan::outage_default(),
        (None, SimMode::Coded) => SimPlan::coded_default(layer.scheme.unwrap_or(Scheme::Omlc)),
    };
    let plan = layer.apply(base).map_err(Failure::Usage)?;
    plan.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(plan)
}

fn simulate(mode: SimMode, args: SimArgs) -> Result<(), Failure> {
    let plan = resolve_plan(mode, &args)?;
    let (curve, mapper) = match mode {
        SimMode::Outage => (run_outage(&plan).map_err(Failure::runtime)?, None),
        SimMode::Coded => {
            let (c, m) = run_coded_bler(&plan).map_err(Failure::runtime)?;
            (c, Some(m))
        }
    };
    let stem = format!("{mode}_{}_{}_seed{}", plan.spec.scheme, plan.spec.decoder, plan.master_seed);
    let (csv, manifest) = write_outputs(&args.out, &stem, &plan, &curve, mapper.as_ref()).map_err(|e| {
        Failure::Runtime(format!("cannot write outputs to {}: {e}", args.out.display()))
    })?;
    print!("{}", curve.to_csv());
    eprintln!("wrote {} and {}", csv.display(), manifest.display());
    Ok(())
}

fn load_channel(args: &ChannelArgs) -> Result<(ChannelRealization, MarcConfig), Failure> {
    let hd = matrix::read_blocks(&args.hd).map_err(Failure::Usage)?;
    let hr = matrix::read_blocks(&args.hr).map_err(Failure::Usage)?;
    let users = args.rates.len();
    if hd.len() != users + 1 || hr.len() != users {
        return Err(Failure::Usage(format!(
            "{users} rates need {} destination blocks and {users} relay blocks, got {} and {}",
            users + 1,
            hd.len(),
            hr.len()
        )));
    }
    let first: &CMatrix = &hd[0];
    let cfg = MarcConfig {
        users,
        user_antennas: first.ncols(),
        relay_antennas: hd[users].ncols(),
        dest_antennas: first.nrows(),
        slots: args.slots,
        slot_len: args.slot_len,
        rho_r_db: args.snr_db,
        rho_d_db: args.snr_db,
        sr_offset_db: args.sr_offset_db,
        rates: args.rates.clone(),
        relay_rate: args.relay_rate.unwrap_or(args.rates.iter().sum()),
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let real = ChannelRealization {
        h_relay: hr,
        h_dst_relay: hd[users].clone(),
        h_dst: hd[..users].to_vec(),
    };
    real.check(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok((real, cfg))
}

fn region(args: ChannelArgs, decision_only: bool) -> Result<(), Failure> {
    let (real, cfg) = load_channel(&args)?;
    let mut spec =
        RateRegionSpec::from_config(&cfg, args.scheme, args.decoder).map_err(|e| Failure::Usage(e.to_string()))?;
    spec.silent_relay_is_outage = args.silent_relay_is_outage;
    let sym = marc_core::channel::SymbolChannels::new(&real, &cfg).map_err(Failure::runtime)?;
    let caps = subset_capacities(&sym, &cfg);
    if decision_only {
        let ell1 = decision_time_from(&caps, &spec, &cfg);
        println!("ell1={ell1}");
        println!("relay_silent={}", ell1 == cfg.slots);
        return Ok(());
    }
    let verdict = outage_indicator(&real, &spec, &cfg).map_err(Failure::runtime)?;
    println!("in_outage={}", verdict.in_outage);
    println!("ell1={}", verdict.ell1);
    let violated: Vec<String> = verdict
        .violated_subsets
        .iter()
        .map(|s| s.iter().map(|u| (u + 1).to_string()).collect::<Vec<_>>().join("+"))
        .collect();
    println!("violated={}", violated.join(","));
    println!("subset,relay,dst_users,dst_with_relay");
    for c in &caps {
        let name: Vec<String> = c.users.iter().map(|u| (u + 1).to_string()).collect();
        println!("{},{:.6},{:.6},{:.6}", name.join("+"), c.relay, c.dst_users, c.dst_with_relay);
    }
    Ok(())
}

fn run_validate(args: ValidateArgs) -> Result<(), Failure> {
    let checks = validate::run(
        args.suite,
        validate::Options {
            seed: args.seed,
            break_gdfe: args.break_gdfe,
            exhaustive_tau: args.exhaustive_tau,
        },
    )
    .map_err(Failure::Usage)?;
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        let verdict = if c.pass { "ok" } else { "FAILED" };
        println!("{:<width$}  {verdict:<6}  {}", c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} validation check(s) failed")));
    }
    Ok(())
}
