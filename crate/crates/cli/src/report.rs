//! CSV tables and the run manifest.

use std::io::Write;
use std::path::Path;

use atomsqueeze::optimize::{ParticleRecord, SweepRecord};
use serde::Serialize;

use crate::config::RunConfig;

pub const SWEEP_RABI_COLUMNS: [&str; 13] = [
    "omega0",
    "tau_bs",
    "dp",
    "n_atoms",
    "mu_opt",
    "xi_opt",
    "dphi",
    "gain_sqrtN",
    "gain_db",
    "survival_1",
    "survival_2",
    "slope",
    "error",
];

/// Bumped whenever a column is added, removed or reinterpreted.
pub const CSV_SCHEMA: &str = "atomsqueeze-csv/1";

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn record_fields(r: &SweepRecord) -> Vec<String> {
    vec![
        num(r.omega0),
        num(r.tau_bs),
        num(r.dp),
        r.n_atoms.to_string(),
        num(r.mu_opt),
        num(r.xi_opt),
        num(r.dphi),
        num(r.gain_sqrt_n),
        num(r.gain_db),
        num(r.survival_1),
        num(r.survival_2),
        num(r.slope),
        r.error.clone(),
    ]
}

pub fn write_table<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_rabi_csv<W: Write>(out: W, records: &[SweepRecord]) -> csv::Result<()> {
    write_table(out, &SWEEP_RABI_COLUMNS, records.iter().map(record_fields))
}

pub fn sweep_n_csv<W: Write>(out: W, records: &[ParticleRecord]) -> csv::Result<()> {
    let mut header = SWEEP_RABI_COLUMNS.to_vec();
    header.insert(header.len() - 1, "ideal_bound");
    let rows = records.iter().map(|p| {
        let mut row = record_fields(&p.record);
        row.insert(row.len() - 1, num(p.ideal_bound));
        row
    });
    write_table(out, &header, rows)
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    csv_schema: &'static str,
    command: &'a str,
    outputs: &'a [&'a str],
    /// Loadable with `--config` to rerun.
    resolved_config: String,
    config: &'a RunConfig,
}

/// Sidecars `<stem>.manifest.json` and `<stem>.config.toml` holding the
/// resolved configuration. Neither contains timestamps, so both are
/// reproducible themselves.
pub fn write_manifest(dir: &Path, stem: &str, command: &str, outputs: &[&str], config: &RunConfig) -> std::io::Result<()> {
    let config_file = format!("{stem}.config.toml");
    let toml_text = toml::to_string(config).map_err(std::io::Error::other)?;
    std::fs::write(dir.join(&config_file), toml_text)?;
    let m = Manifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        csv_schema: CSV_SCHEMA,
        command,
        outputs,
        resolved_config: config_file,
        config,
    };
    let mut text = serde_json::to_string_pretty(&m).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(dir.join(format!("{stem}.manifest.json")), text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(error: &str) -> SweepRecord {
        SweepRecord {
            omega0: 8.0,
            tau_bs: 0.68,
            dp: 0.05,
            n_atoms: 20_000,
            mu_opt: 3.2e-3,
            xi_opt: 0.04,
            dphi: 3e-4,
            gain_sqrt_n: 0.0424,
            gain_db: 27.4,
            survival_1: 0.99,
            survival_2: 0.99,
            slope: 9999.0,
            error: error.into(),
        }
    }

    #[test]
    fn numbers_keep_seventeen_digits() {
        let s = num(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        assert_eq!(num(f64::NAN), "NaN");
    }

    #[test]
    fn header_and_rows() {
        let mut buf = Vec::new();
        sweep_rabi_csv(&mut buf, &[sample(""), sample("no root, bad bracket")]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.split("\r\n").collect();
        assert_eq!(lines[0], SWEEP_RABI_COLUMNS.join(","));
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(','));
        assert!(lines[2].ends_with("\"no root, bad bracket\""));
    }

    #[test]
    fn particle_table_puts_the_bound_before_error() {
        let mut buf = Vec::new();
        let rec = ParticleRecord { record: sample(""), ideal_bound: 0.03 };
        sweep_n_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("omega0,"));
        assert!(text.contains("slope,ideal_bound,error\r\n"));
    }
}
