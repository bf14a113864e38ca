//! CSV rows shared by all experiments.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// One output line. `trials` counts successful trials (or samples) summed
/// over drops; `trials + failures` is the requested total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub experiment: String,
    pub layout: String,
    pub nt: usize,
    pub np: usize,
    pub estimator: String,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub trials: u64,
    pub failures: u64,
    pub seed: u64,
}

pub const HEADER: [&str; 11] = [
    "experiment",
    "layout",
    "nt",
    "np",
    "estimator",
    "metric",
    "value",
    "stderr",
    "trials",
    "failures",
    "seed",
];

pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    // Written explicitly so an empty table still carries its header.
    w.write_record(HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[CsvRow], path: &Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(HarnessError::Config(format!("unexpected CSV header {header:?}")));
    }
    Ok(r.deserialize().collect::<Result<Vec<CsvRow>, _>>()?)
}
