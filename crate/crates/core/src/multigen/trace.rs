use std::fmt::Write as _;

use super::metrics::{drop_convergence_rate, Dcr, PSNR_CAP};
use super::{GenerationTrace, MultigenError, Result};

pub const TRACE_HEADER: &str =
    "sequence,method,rate_point,k,bpp,psnr_y,delta_psnr_y,psnr_y_drop,drop_convergence_rate,lossless_flag";

/// One CSV line. `psnr_y` is already capped; `delta` and `dcr` are absent at `k = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub sequence: String,
    pub method: String,
    pub rate_point: String,
    pub k: usize,
    pub bpp: f64,
    pub psnr_y: f64,
    pub delta: Option<f64>,
    pub drop: f64,
    pub dcr: Option<Dcr>,
    pub lossless: bool,
}

pub fn trace_rows(
    sequence: &str,
    method: &str,
    rate_point: &str,
    trace: &GenerationTrace,
    max_drop: f64,
) -> Vec<TraceRow> {
    trace
        .generations
        .iter()
        .map(|g| {
            let delta = trace.delta(g.k);
            TraceRow {
                sequence: sequence.to_string(),
                method: method.to_string(),
                rate_point: rate_point.to_string(),
                k: g.k,
                bpp: g.bpp,
                psnr_y: g.psnr_y.min(PSNR_CAP),
                delta,
                drop: trace.drop(g.k).unwrap_or(0.0),
                dcr: delta.map(|d| drop_convergence_rate(d, max_drop)),
                lossless: g.psnr_y.is_infinite(),
            }
        })
        .collect()
}

/// Numbers use the shortest representation that parses back to the same value.
pub fn write_trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.sequence,
            r.method,
            r.rate_point,
            r.k,
            r.bpp,
            r.psnr_y,
            r.delta.map(|d| d.to_string()).unwrap_or_default(),
            r.drop,
            r.dcr.map(|d| d.to_string()).unwrap_or_default(),
            u8::from(r.lossless)
        );
    }
    s
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        _ => {
            return Err(MultigenError::Csv {
                line: 1,
                reason: "missing or unexpected header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| MultigenError::Csv { line: i + 1, reason };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(err(format!("expected 10 fields, found {}", f.len())));
        }
        let num = |idx: usize| -> Result<f64> {
            f[idx]
                .parse::<f64>()
                .map_err(|_| err(format!("bad number `{}`", f[idx])))
        };
        let delta = if f[6].is_empty() { None } else { Some(num(6)?) };
        let dcr = match f[8] {
            "" => None,
            "converged" => Some(Dcr::Converged),
            "undefined" => Some(Dcr::Undefined {
                delta: delta.unwrap_or(f64::NAN),
            }),
            _ => Some(Dcr::Value(num(8)?)),
        };
        rows.push(TraceRow {
            sequence: f[0].to_string(),
            method: f[1].to_string(),
            rate_point: f[2].to_string(),
            k: f[3].parse().map_err(|_| err(format!("bad generation `{}`", f[3])))?,
            bpp: num(4)?,
            psnr_y: num(5)?,
            delta,
            drop: num(7)?,
            dcr,
            lossless: match f[9] {
                "0" => false,
                "1" => true,
                other => return Err(err(format!("bad lossless flag `{other}`"))),
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multigen::Generation;

    fn sample() -> GenerationTrace {
        let psnrs = [31.25, 30.5, 30.125, 30.125, 29.9];
        GenerationTrace {
            generations: psnrs
                .iter()
                .enumerate()
                .map(|(i, &p)| Generation {
                    k: i + 1,
                    bpp: 0.75 + i as f64 * 1e-3,
                    psnr_y: p,
                })
                .collect(),
        }
    }

    #[test]
    fn csv_roundtrip() {
        let t = sample();
        let rows = trace_rows("toy", "LCC", "R4", &t, t.max_drop());
        let text = write_trace_csv(&rows);
        assert!(text.starts_with(TRACE_HEADER));
        assert_eq!(parse_trace_csv(&text).unwrap(), rows);
        assert_eq!(rows[0].delta, None);
        assert_eq!(rows[3].dcr, Some(Dcr::Converged));
        assert_eq!(rows[1].dcr.unwrap().value().unwrap(), (0.75 / t.max_drop()).ln());
    }

    #[test]
    fn lossless_rows_are_capped() {
        let t = GenerationTrace {
            generations: vec![
                Generation {
                    k: 1,
                    bpp: 24.1,
                    psnr_y: f64::INFINITY,
                },
                Generation {
                    k: 2,
                    bpp: 24.1,
                    psnr_y: f64::INFINITY,
                },
            ],
        };
        let rows = trace_rows("toy", "control", "-", &t, 0.0);
        assert_eq!(rows[1].psnr_y, PSNR_CAP);
        assert!(rows[1].lossless);
        assert_eq!(rows[1].drop, 0.0);
        let text = write_trace_csv(&rows);
        assert!(!text.contains("inf"));
        assert!(text.lines().nth(2).unwrap().ends_with(",0,0,undefined,1"));
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_trace_csv("nope\n").is_err());
        let bad = format!("{TRACE_HEADER}\na,b,c,1,x,1,,0,,0\n");
        assert!(matches!(parse_trace_csv(&bad), Err(MultigenError::Csv { line: 2, .. })));
    }
}
