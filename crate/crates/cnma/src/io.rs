//! CSV ingestion of contrast-level and arm-level data, and CSV export of networks.
//!
//! Contrast level: `studlab,treat1,treat2,TE,seTE`. Arm level (binary outcome):
//! `studlab,treat1,event1,n1,treat2,event2,n2`, converted to log odds ratios. The format is
//! picked from the header; extra columns are ignored.

use std::fs;
use std::path::Path;

use cnma_core::estimator::pairwise_from_binary;
use cnma_core::network::{ContrastRecord, Network};

use crate::error::{CliError, Result};

const CONTRAST_COLUMNS: [&str; 5] = ["studlab", "treat1", "treat2", "TE", "seTE"];
const ARM_COLUMNS: [&str; 7] = ["studlab", "treat1", "event1", "n1", "treat2", "event2", "n2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Contrast,
    Arm,
}

pub fn read_records(path: &Path) -> Result<(Vec<ContrastRecord>, InputFormat)> {
    let bytes = fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_records(&bytes, path)
}

pub fn read_network(path: &Path, separator: char) -> Result<(Network, InputFormat)> {
    let (records, format) = read_records(path)?;
    let net = Network::from_records(&records, separator).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((net, format))
}

pub fn parse_records(bytes: &[u8], path: &Path) -> Result<(Vec<ContrastRecord>, InputFormat)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let find_all = |names: &[&str]| names.iter().map(|n| position(n)).collect::<Option<Vec<_>>>();
    let (format, cols) = if let Some(cols) = find_all(&CONTRAST_COLUMNS) {
        (InputFormat::Contrast, cols)
    } else if let Some(cols) = find_all(&ARM_COLUMNS) {
        (InputFormat::Arm, cols)
    } else {
        return Err(parse_err(
            1,
            format!(
                "header must contain either {} or {}",
                CONTRAST_COLUMNS.join(","),
                ARM_COLUMNS.join(",")
            ),
        ));
    };

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(cols[i]).unwrap_or("");
        let text = |i: usize, name: &str| -> Result<String> {
            let v = field(i);
            if v.is_empty() {
                Err(parse_err(line, format!("empty {name}")))
            } else {
                Ok(v.to_string())
            }
        };
        let number = |i: usize, name: &str| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("{name} '{}' is not a number", field(i))))
        };
        let count = |i: usize, name: &str| -> Result<u64> {
            field(i)
                .parse::<u64>()
                .map_err(|_| parse_err(line, format!("{name} '{}' is not a non-negative integer", field(i))))
        };
        let record = match format {
            InputFormat::Contrast => ContrastRecord {
                study_id: text(0, "studlab")?,
                treat1: text(1, "treat1")?,
                treat2: text(2, "treat2")?,
                effect: number(3, "TE")?,
                se: number(4, "seTE")?,
            },
            InputFormat::Arm => {
                let (e1, n1) = (count(2, "event1")?, count(3, "n1")?);
                let (e2, n2) = (count(5, "event2")?, count(6, "n2")?);
                let (effect, se) =
                    pairwise_from_binary(e1, n1, e2, n2).map_err(|e| parse_err(line, e.to_string()))?;
                ContrastRecord {
                    study_id: text(0, "studlab")?,
                    treat1: text(1, "treat1")?,
                    treat2: text(4, "treat2")?,
                    effect,
                    se,
                }
            }
        };
        if !(record.effect.is_finite() && record.se.is_finite() && record.se > 0.0) {
            return Err(parse_err(line, "TE must be finite and seTE positive".into()));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    Ok((records, format))
}

/// Contrast-level CSV of a network, full precision.
pub fn network_csv(net: &Network) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Usage(e.to_string());
    w.write_record(CONTRAST_COLUMNS).map_err(err)?;
    for r in net.records() {
        w.write_record([
            r.study_id,
            r.treat1,
            r.treat2,
            r.effect.to_string(),
            r.se.to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}
