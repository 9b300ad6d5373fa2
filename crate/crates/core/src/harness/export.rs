use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use super::link::SimResult;
use super::Error;

pub const RESULTS_HEADER: &str = "ebn0_db,snr_db,blocks,bit_errors,block_errors,ber,bler,avg_spa_iters";
pub const CONSTELLATION_HEADER: &str = "label_bits,re,im";

/// 17 significant digits.
fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn results_csv(rows: &[SimResult]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            f17(r.ebn0_db),
            f17(r.snr_db),
            r.blocks,
            r.bit_errors,
            r.block_errors,
            f17(r.ber),
            f17(r.bler),
            f17(r.avg_spa_iters)
        )
        .expect("writing to a String");
    }
    s
}

pub fn constellation_csv(points: &[Complex64]) -> Result<String, Error> {
    if points.len() < 2 || !points.len().is_power_of_two() {
        return Err(Error::Contract(format!("{} points is not 2^m", points.len())));
    }
    let m = points.len().trailing_zeros() as usize;
    let mut s = String::from(CONSTELLATION_HEADER);
    s.push('\n');
    for (label, p) in points.iter().enumerate() {
        writeln!(s, "{:0width$b},{},{}", label, f17(p.re), f17(p.im), width = m)
            .expect("writing to a String");
    }
    Ok(s)
}

pub fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_file(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes the constellation of `points` (label order) as CSV.
pub fn export_constellation(points: &[Complex64], path: &Path) -> Result<(), Error> {
    write_file(path, &constellation_csv(points)?)
}

/// Provenance of one command-line run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunRecord {
    pub command: Vec<String>,
    /// Effective configuration after defaults and flags are applied.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub version: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub outputs: Vec<String>,
}

pub fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunRecord {
    pub fn new(command: Vec<String>, config: serde_json::Value, seeds: Vec<u64>) -> Self {
        RunRecord {
            command,
            config,
            seeds,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_s: unix_now(),
            finished_unix_s: 0.0,
            outputs: Vec::new(),
        }
    }

    /// Stamps the finish time and writes the record as pretty JSON.
    pub fn finish(mut self, path: &Path) -> Result<(), Error> {
        self.finished_unix_s = unix_now();
        let text = serde_json::to_string_pretty(&self).map_err(|e| Error::Contract(e.to_string()))?;
        write_file(path, &text)
    }
}

/// One parsed results row (the CSV columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub ebn0_db: f64,
    pub snr_db: f64,
    pub blocks: u64,
    pub bit_errors: u64,
    pub block_errors: u64,
    pub ber: f64,
    pub bler: f64,
    pub avg_spa_iters: f64,
}

fn data_lines(text: &str, header: &str) -> Result<Vec<(usize, Vec<String>)>, Error> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((i, h)) => {
            return Err(Error::Parse {
                row: i + 1,
                message: format!("expected header `{header}`, found `{h}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                row: 0,
                message: "empty file".into(),
            })
        }
    }
    let cols = header.split(',').count();
    let rows: Vec<(usize, Vec<String>)> = lines
        .map(|(i, l)| (i + 1, l.split(',').map(|f| f.trim().to_string()).collect::<Vec<_>>()))
        .collect();
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "no data rows".into(),
        });
    }
    for (row, f) in &rows {
        if f.len() != cols {
            return Err(Error::Parse {
                row: *row,
                message: format!("{} fields, expected {cols}", f.len()),
            });
        }
    }
    Ok(rows)
}

fn num<T: std::str::FromStr>(row: usize, field: &str, name: &str) -> Result<T, Error> {
    field.parse().map_err(|_| Error::Parse {
        row,
        message: format!("{name}: cannot parse `{field}`"),
    })
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>, Error> {
    data_lines(text, RESULTS_HEADER)?
        .into_iter()
        .map(|(row, f)| {
            Ok(ResultRow {
                ebn0_db: num(row, &f[0], "ebn0_db")?,
                snr_db: num(row, &f[1], "snr_db")?,
                blocks: num(row, &f[2], "blocks")?,
                bit_errors: num(row, &f[3], "bit_errors")?,
                block_errors: num(row, &f[4], "block_errors")?,
                ber: num(row, &f[5], "ber")?,
                bler: num(row, &f[6], "bler")?,
                avg_spa_iters: num(row, &f[7], "avg_spa_iters")?,
            })
        })
        .collect()
}

/// Returns `(label_bits, point)` rows.
pub fn parse_constellation_csv(text: &str) -> Result<Vec<(String, Complex64)>, Error> {
    data_lines(text, CONSTELLATION_HEADER)?
        .into_iter()
        .map(|(row, f)| {
            if f[0].is_empty() || !f[0].chars().all(|c| c == '0' || c == '1') {
                return Err(Error::Parse {
                    row,
                    message: format!("label `{}` is not a bit string", f[0]),
                });
            }
            Ok((
                f[0].clone(),
                Complex64::new(num(row, &f[1], "re")?, num(row, &f[2], "im")?),
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::make_gray_qam;

    #[test]
    fn constellation_export() {
        let q = make_gray_qam(16).unwrap();
        let text = constellation_csv(q.points()).unwrap();
        let rows = parse_constellation_csv(&text).unwrap();
        assert_eq!(rows.len(), 16);
        assert_eq!(rows[0].0, "0000");
        assert!((rows[0].1.re - 0.94868).abs() < 1e-5 && (rows[0].1.im - 0.94868).abs() < 1e-5);
        for ((_, p), q) in rows.iter().zip(q.points()) {
            assert_eq!(p, q);
        }
    }

    #[test]
    fn results_round_trip() {
        let r = SimResult {
            ebn0_db: 4.4897,
            snr_db: 7.5,
            sigma2: 0.17,
            blocks: 1000,
            bit_errors: 7,
            block_errors: 2,
            ber: 7.0 / 528000.0,
            bler: 0.002,
            avg_spa_iters: 3.25,
            truncated: false,
        };
        let text = results_csv(&[r.clone()]);
        assert!(text.starts_with("ebn0_db,snr_db,blocks,bit_errors,block_errors,ber,bler,avg_spa_iters\n"));
        let back = parse_results_csv(&text).unwrap();
        assert_eq!(back[0].ber, r.ber);
        assert_eq!(back[0].ebn0_db, r.ebn0_db);
        assert!(matches!(parse_results_csv(""), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_results_csv(&format!("{RESULTS_HEADER}\n1,2,x,4,5,6,7,8\n")),
            Err(Error::Parse { row: 2, .. })
        ));
        assert!(parse_results_csv(&format!("{RESULTS_HEADER}\n")).is_err());
    }
}
