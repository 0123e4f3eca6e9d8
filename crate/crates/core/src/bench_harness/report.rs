//! Report rows and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::designs::csv_err;
use crate::error::{Error, Result};
use crate::format_f64;

pub const REPORT_HEADER: [&str; 7] = ["strategy", "N", "d", "metric", "value", "seconds", "seed"];

/// One measured quantity for one design arm.
///
/// `metric` is `RMSPE` or `MAPE` for accuracy studies. Fitted parameters
/// (`phi_hat`, `sigma2_hat`) and timings are reported as extra rows with
/// their own metric names. A `NaN` value marks an arm that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub strategy: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub metric: String,
    pub value: f64,
    /// Wall-clock time of the arm.
    pub seconds: f64,
    pub seed: u64,
}

impl ExperimentReport {
    pub fn failed(&self) -> bool {
        self.value.is_nan()
    }
}

pub fn write_report_csv<W: Write>(rows: &[ExperimentReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.n.to_string(),
            r.d.to_string(),
            r.metric.clone(),
            format_f64(r.value),
            format_f64(r.seconds),
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv<R: Read>(reader: R) -> Result<Vec<ExperimentReport>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(REPORT_HEADER) {
        return Err(Error::Parse(format!("report header must be `{}`", REPORT_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
            s.trim().parse().map_err(|_| Error::Parse(format!("bad report field `{s}`")))
        }
        out.push(ExperimentReport {
            strategy: field(0).to_string(),
            n: num(field(1))?,
            d: num(field(2))?,
            metric: field(3).to_string(),
            value: num(field(4))?,
            seconds: num(field(5))?,
            seed: num(field(6))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<ExperimentReport> {
        vec![
            ExperimentReport {
                strategy: "sparse_grid".into(),
                n: 41,
                d: 4,
                metric: "RMSPE".into(),
                value: 0.1 + 0.2,
                seconds: 1.0 / 3.0,
                seed: 7,
            },
            ExperimentReport {
                strategy: "lhs".into(),
                n: 50,
                d: 4,
                metric: "MAPE".into(),
                value: f64::NAN,
                seconds: 2e-300,
                seed: u64::MAX,
            },
        ]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut buf = Vec::new();
        write_report_csv(&rows(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("strategy,N,d,metric,value,seconds,seed\n"));
        assert!(text.contains("3.0000000000000004e-1"));
        let back = read_report_csv(&buf[..]).unwrap();
        assert_eq!(back[0], rows()[0]);
        assert!(back[1].failed());
        assert_eq!(back[1].seconds.to_bits(), rows()[1].seconds.to_bits());
        assert_eq!(back[1].seed, u64::MAX);
    }

    #[test]
    fn json_round_trip() {
        let r = &rows()[0];
        let s = serde_json::to_string(r).unwrap();
        assert!(s.contains("\"N\":41"));
        assert_eq!(&serde_json::from_str::<ExperimentReport>(&s).unwrap(), r);
    }

    #[test]
    fn bad_header() {
        assert!(read_report_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
