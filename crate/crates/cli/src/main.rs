//! `ttl`: command-line front end for the transition lab.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 when a
//! simulation or training run diverges.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ttl_core::config::{
    excitation_from, inner_gains_from, scenario_from, shaping_from, training_hyper_from,
    vehicle_from, RawConfig,
};
use ttl_core::controller::attitude_error_matrix;
use ttl_core::error::{Error, Result};
use ttl_core::io::{read_dataset, write_dataset, write_refs, write_report, write_trajectory};
use ttl_core::rnn::{Channel, RnnNetwork};
use ttl_core::sim::{run_transition, WeightsSource};
use ttl_core::training::{collect_dataset, train_offline};
use ttl_core::TransitionMode;

const USAGE: &str = "\
usage: ttl <command> [options]

commands:
  gen-data     --channel {u|w} --out PATH [--config PATH]
  train        --channel {u|w} --data PATH --out-weights PATH --report PATH [--config PATH]
  simulate     --scenario PATH --out PATH [--oracle]
  check-gains  [--config PATH]
  export-refs  --mode {hc|ch} --out PATH [--config PATH]

The TTL_SEED environment variable overrides the configured seed for
gen-data and train. Exit codes: 0 success, 1 usage or configuration
error, 2 divergence.";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Usage(_)) {
                eprintln!("{USAGE}");
            }
            if e.is_divergence() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(args: &[String]) -> Result<()> {
    let Some(command) = args.first() else {
        return Err(Error::Usage("missing command".into()));
    };
    let rest = &args[1..];
    match command.as_str() {
        "gen-data" => gen_data(rest),
        "train" => train(rest),
        "simulate" => simulate(rest),
        "check-gains" => check_gains(rest),
        "export-refs" => export_refs(rest),
        other => Err(Error::Usage(format!("unknown command '{other}'"))),
    }
}

/// Parsed command-line flags: `--flag value` pairs plus bare switches.
struct Flags(HashMap<String, String>);

impl Flags {
    fn parse(args: &[String], value_flags: &[&str], switches: &[&str]) -> Result<Self> {
        let mut out = HashMap::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let Some(name) = arg.strip_prefix("--") else {
                return Err(Error::Usage(format!("unexpected argument '{arg}'")));
            };
            if switches.contains(&name) {
                out.insert(name.to_string(), String::new());
                i += 1;
            } else if value_flags.contains(&name) {
                let value = args
                    .get(i + 1)
                    .ok_or_else(|| Error::Usage(format!("--{name} needs a value")))?;
                out.insert(name.to_string(), value.clone());
                i += 2;
            } else {
                return Err(Error::Usage(format!("unknown flag --{name}")));
            }
        }
        Ok(Flags(out))
    }

    fn require(&self, name: &str) -> Result<&str> {
        self.0
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::Usage(format!("missing required flag --{name}")))
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    fn has(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }
}

fn load_config(flags: &Flags) -> Result<RawConfig> {
    match flags.get("config") {
        Some(path) => RawConfig::from_file(Path::new(path)),
        None => Ok(RawConfig::default()),
    }
}

/// Seed precedence: TTL_SEED environment variable, then the config file,
/// then the built-in default.
fn effective_seed(configured: u64) -> Result<u64> {
    match std::env::var("TTL_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::Config(format!("TTL_SEED: {e} (value '{text}')"))),
        Err(_) => Ok(configured),
    }
}

fn gen_data(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["channel", "config", "out"], &[])?;
    let channel = Channel::parse(flags.require("channel")?)?;
    let out = PathBuf::from(flags.require("out")?);
    let cfg = load_config(&flags)?;
    let mut excitation = excitation_from(&cfg, channel)?;
    excitation.seed = effective_seed(excitation.seed)?;
    let vp = vehicle_from(&cfg)?;
    let data = collect_dataset(&excitation, &vp)?;
    write_dataset(&data, &out)?;
    println!("wrote {} samples for channel {} to {}", data.records.len(), channel.tag(), out.display());
    Ok(())
}

fn train(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["channel", "data", "config", "out-weights", "report"], &[])?;
    let channel = Channel::parse(flags.require("channel")?)?;
    let data_path = PathBuf::from(flags.require("data")?);
    let weights_path = PathBuf::from(flags.require("out-weights")?);
    let report_path = PathBuf::from(flags.require("report")?);
    let cfg = load_config(&flags)?;
    let hyper = training_hyper_from(&cfg)?;
    let seed = effective_seed(cfg.get_u64("seed")?.unwrap_or(42))?;

    let data = read_dataset(&data_path, channel)?;
    let net = RnnNetwork::from_seed(8, 1, 0, seed)?;
    let (trained, report) =
        train_offline(&data, &net, hyper.epochs, hyper.learning_rate, hyper.clip)?;
    trained.save(&weights_path)?;
    write_report(&report, &report_path)?;
    match report.final_mse {
        Some(m) => println!(
            "trained channel {} for {} epochs: best mse {m:.6e}; weights -> {}, report -> {}",
            channel.tag(),
            report.epochs,
            weights_path.display(),
            report_path.display()
        ),
        None => println!(
            "channel {} left untrained (0 epochs); weights -> {}, report -> {}",
            channel.tag(),
            weights_path.display(),
            report_path.display()
        ),
    }
    Ok(())
}

fn simulate(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["scenario", "out"], &["oracle"])?;
    let scenario_path = PathBuf::from(flags.require("scenario")?);
    let out = PathBuf::from(flags.require("out")?);
    let cfg = RawConfig::from_file(&scenario_path)?;
    let mut scenario = scenario_from(&cfg)?;
    if flags.has("oracle") {
        scenario.weights = WeightsSource::Oracle;
    }
    let log = run_transition(&scenario)?;
    write_trajectory(&log, &out)?;
    let last = log.final_row();
    println!(
        "wrote {} rows to {} (final e_u = {:.3e}, e_w = {:.3e}, e_theta = {:.3e})",
        log.rows.len(),
        out.display(),
        last.e_u,
        last.e_w,
        last.e_theta
    );
    Ok(())
}

fn check_gains(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["config"], &[])?;
    let cfg = load_config(&flags)?;
    let gains = inner_gains_from(&cfg)?;
    let sys = attitude_error_matrix(&gains);
    println!("A = [[{}, {}], [{}, {}]]", sys.a[0][0], sys.a[0][1], sys.a[1][0], sys.a[1][1]);
    println!(
        "eigenvalues: {}, {}",
        format_eigenvalue(sys.eigenvalues[0]),
        format_eigenvalue(sys.eigenvalues[1])
    );
    println!("hurwitz: {}", sys.hurwitz);
    Ok(())
}

fn format_eigenvalue((re, im): (f64, f64)) -> String {
    if im == 0.0 {
        format!("{re}")
    } else if im > 0.0 {
        format!("{re} + {im}i")
    } else {
        format!("{re} - {}i", -im)
    }
}

fn export_refs(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["mode", "config", "out"], &[])?;
    let mode = TransitionMode::parse(flags.require("mode")?)?;
    let out = PathBuf::from(flags.require("out")?);
    let cfg = load_config(&flags)?;
    let sc = shaping_from(&cfg)?;
    let vp = vehicle_from(&cfg)?;
    let default_t_end = match mode {
        TransitionMode::HoverToCruise => 20.0,
        TransitionMode::CruiseToHover => 30.0,
    };
    let t_end = cfg.get_f64("t_end")?.unwrap_or(default_t_end);
    let dt = cfg.get_f64("dt")?.unwrap_or(1e-3);
    write_refs(mode, &sc, &vp, t_end, dt, &out)?;
    println!("wrote reference table for mode {} to {}", mode.tag(), out.display());
    Ok(())
}
