//! CSV writers and readers for trajectories, datasets, training reports and
//! reference tables. All output is plain text written deterministically, so
//! identical inputs produce byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::guidance::{desired_state, ShapingConstants, TransitionMode};
use crate::rnn::Channel;
use crate::sim::{steps_for, TrajectoryLog};
use crate::training::{DataRecord, Dataset, TrainingReport};
use crate::vehicle::VehicleParams;

/// Column header of a trajectory CSV.
pub const TRAJECTORY_HEADER: &str =
    "t,u,w,theta,q,T,tau,eps,u_d,w_d,theta_d,e_u,e_w,e_theta,h1_hat,h2_hat,eps_sat,T_sat";

/// Column header of a reference-table CSV.
pub const REFS_HEADER: &str = "t,u_d,w_d,alpha_d_deg,theta_d,q_d";

/// Writes one CSV row per logged sample; saturation flags become 0/1.
pub fn write_trajectory(log: &TrajectoryLog, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for r in &log.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.u,
            r.w,
            r.theta,
            r.q,
            r.thrust,
            r.tau,
            r.eps,
            r.u_d,
            r.w_d,
            r.theta_d,
            r.e_u,
            r.e_w,
            r.e_theta,
            r.h1_hat,
            r.h2_hat,
            r.eps_saturated as u8,
            r.thrust_saturated as u8,
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a training set as `t,input,output` rows at full precision, after
/// a comment line naming the channel.
pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# channel={}", data.channel.tag())?;
    writeln!(out, "t,input,output")?;
    for r in &data.records {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", r.t, r.input, r.output)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`], checking it belongs to the
/// expected channel.
pub fn read_dataset(path: &Path, expected: Channel) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut channel = None;
    let mut header_seen = false;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(tag) = rest.trim().strip_prefix("channel=") {
                channel = Some(Channel::parse(tag.trim())?);
            }
            continue;
        }
        if !header_seen {
            if line != "t,input,output" {
                return Err(Error::Config(format!(
                    "{}: expected header 't,input,output', found '{line}'",
                    path.display()
                )));
            }
            header_seen = true;
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |name: &str| -> Result<f64> {
            fields
                .next()
                .ok_or_else(|| {
                    Error::Config(format!("{}:{}: missing {name}", path.display(), lineno + 1))
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| {
                    Error::Config(format!("{}:{}: bad {name}: {e}", path.display(), lineno + 1))
                })
        };
        records.push(DataRecord { t: next("t")?, input: next("input")?, output: next("output")? });
    }
    match channel {
        Some(c) if c != expected => Err(Error::Config(format!(
            "{}: dataset belongs to channel '{}', expected '{}'",
            path.display(),
            c.tag(),
            expected.tag()
        ))),
        _ if records.is_empty() => {
            Err(Error::Config(format!("{}: dataset has no records", path.display())))
        }
        _ => Ok(Dataset { channel: expected, records }),
    }
}

/// Writes the per-epoch loss curve with a summary comment up front.
pub fn write_report(report: &TrainingReport, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match report.final_mse {
        Some(m) => writeln!(
            out,
            "# epochs={} lr={} final_mse={:.16e}",
            report.epochs, report.learning_rate, m
        )?,
        None => writeln!(out, "# epochs={} lr={}", report.epochs, report.learning_rate)?,
    }
    writeln!(out, "epoch,mse")?;
    for &(epoch, mse) in &report.epoch_mse {
        writeln!(out, "{},{:.16e}", epoch, mse)?;
    }
    out.flush()?;
    Ok(())
}

/// Tabulates the reference trajectory on the integration grid and writes it
/// as `t,u_d,w_d,alpha_d_deg,theta_d,q_d`.
pub fn write_refs(
    mode: TransitionMode,
    sc: &ShapingConstants,
    vp: &VehicleParams,
    t_end: f64,
    dt: f64,
    path: &Path,
) -> Result<()> {
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(Error::Config(format!(
            "reference table needs positive t_end and dt, got {t_end} and {dt}"
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{REFS_HEADER}")?;
    for k in 0..=steps_for(t_end, dt) {
        let t = k as f64 * dt;
        let d = desired_state(t, mode, sc, vp, dt);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            t,
            d.u_d,
            d.w_d,
            d.alpha_d.to_degrees(),
            d.theta_d,
            d.q_d
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_transition, ScenarioConfig};
    use crate::training::{collect_dataset, ExcitationConfig};
    use std::path::PathBuf;
    use std::sync::atomic::{AtomicU32, Ordering};

    static COUNTER: AtomicU32 = AtomicU32::new(0);

    fn temp_path(stem: &str) -> PathBuf {
        let unique = COUNTER.fetch_add(1, Ordering::Relaxed);
        std::env::temp_dir().join(format!(
            "ttl-io-{}-{}-{}.csv",
            std::process::id(),
            unique,
            stem
        ))
    }

    #[test]
    fn trajectory_file_has_the_canonical_header() {
        let cfg = ScenarioConfig { t_end: 0.01, ..ScenarioConfig::hover_to_cruise() };
        let log = run_transition(&cfg).unwrap();
        let path = temp_path("traj");
        write_trajectory(&log, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::remove_file(&path).ok();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,u,w,theta,q,T,tau,eps,u_d,w_d,theta_d,e_u,e_w,e_theta,h1_hat,h2_hat,eps_sat,T_sat"
        );
        assert_eq!(lines.count(), log.rows.len());
        // Every data row carries all 18 columns.
        for line in text.lines().skip(1) {
            assert_eq!(line.split(',').count(), 18);
        }
    }

    #[test]
    fn dataset_round_trips_bitwise() {
        let cfg = ExcitationConfig { n_samples: 50, ..ExcitationConfig::default_for(Channel::W) };
        let data = collect_dataset(&cfg, &VehicleParams::default()).unwrap();
        let path = temp_path("dataset");
        write_dataset(&data, &path).unwrap();
        let back = read_dataset(&path, Channel::W).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(back.records.len(), data.records.len());
        for (a, b) in data.records.iter().zip(&back.records) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            assert_eq!(a.input.to_bits(), b.input.to_bits());
            assert_eq!(a.output.to_bits(), b.output.to_bits());
        }
    }

    #[test]
    fn dataset_channel_mismatch_is_rejected() {
        let cfg = ExcitationConfig { n_samples: 5, ..ExcitationConfig::default_for(Channel::U) };
        let data = collect_dataset(&cfg, &VehicleParams::default()).unwrap();
        let path = temp_path("mismatch");
        write_dataset(&data, &path).unwrap();
        let err = read_dataset(&path, Channel::W).unwrap_err();
        std::fs::remove_file(&path).ok();
        assert!(err.to_string().contains("channel"));
    }

    #[test]
    fn malformed_dataset_rows_are_reported_with_line_numbers() {
        let path = temp_path("bad");
        std::fs::write(&path, "t,input,output\n0.0,1.0\n").unwrap();
        let err = read_dataset(&path, Channel::U).unwrap_err();
        std::fs::remove_file(&path).ok();
        assert!(err.to_string().contains(":2:"), "got {err}");
    }

    #[test]
    fn report_lists_every_epoch() {
        let report = TrainingReport {
            epoch_mse: vec![(1, 0.5), (2, 0.25)],
            final_mse: Some(0.25),
            epochs: 2,
            learning_rate: 1e-3,
        };
        let path = temp_path("report");
        write_report(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::remove_file(&path).ok();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# epochs=2 lr=0.001 final_mse="));
        assert_eq!(lines[1], "epoch,mse");
        assert!(lines[2].starts_with("1,"));
        assert!(lines[3].starts_with("2,"));
    }

    #[test]
    fn reference_table_covers_the_grid() {
        let path = temp_path("refs");
        write_refs(
            TransitionMode::HoverToCruise,
            &ShapingConstants::default(),
            &VehicleParams::default(),
            0.1,
            0.01,
            &path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::remove_file(&path).ok();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,u_d,w_d,alpha_d_deg,theta_d,q_d");
        assert_eq!(lines.len(), 12);
        // At t = 0 the pitch reference is vertical.
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[0], "0");
        let theta: f64 = first[4].parse().unwrap();
        assert!((theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
