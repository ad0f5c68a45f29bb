//! One output row per estimate, as CSV or JSON.

use std::io;

use serde::{Deserialize, Serialize};

use crnsens::stats::EstimateReport;

/// Flattened estimate plus the case it belongs to. Field order is the CSV
/// column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub model: String,
    pub param: String,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub method: String,
    pub h: Option<f64>,
    #[serde(rename = "N")]
    pub n: u64,
    pub mean: f64,
    pub std_dev: f64,
    pub p: Option<f64>,
    pub elapsed_s: Option<f64>,
    pub seed: u64,
}

impl ResultRecord {
    pub fn from_report(
        model: &str,
        param: &str,
        t_end: f64,
        report: &EstimateReport,
        timing: bool,
    ) -> ResultRecord {
        ResultRecord {
            model: model.to_string(),
            param: param.to_string(),
            t_end,
            method: report.method.to_string(),
            h: report.h,
            n: report.n,
            mean: report.mean,
            std_dev: report.std_dev,
            p: report.confidence,
            elapsed_s: timing.then_some(report.elapsed_s),
            seed: report.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Write records as a CSV table (with header) or as JSON. A single JSON
/// record is written as an object, several as an array.
pub fn write_records<W: io::Write>(
    out: W,
    records: &[ResultRecord],
    format: Format,
    single: bool,
) -> io::Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r).map_err(io::Error::other)?;
            }
            w.flush()
        }
        Format::Json => {
            let mut out = out;
            if single && records.len() == 1 {
                serde_json::to_writer_pretty(&mut out, &records[0])?;
            } else {
                serde_json::to_writer_pretty(&mut out, records)?;
            }
            writeln!(out)
        }
    }
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<ResultRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
