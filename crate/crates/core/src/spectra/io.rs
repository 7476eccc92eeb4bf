//! CSV datasets: scans, flops and decay curves.

use std::fmt::Write as _;

use super::{DecayPoint, FlopPoint, ScanPoint};
use crate::{Error, Result};

pub const SCAN_HEADER: &str = "freq_offset_khz,successes,trials";
pub const FLOP_HEADER: &str = "time_us,successes,trials";
pub const DECAY_HEADER: &str = "time_us,contrast";

/// Data rows with 1-based line numbers, after checking the header.
fn rows<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h.replace(' ', "") == header => {}
        Some((line, h)) => {
            return Err(Error::Parse {
                line,
                message: format!("expected header '{header}', found '{h}'"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: format!("missing header '{header}'"),
            })
        }
    }
    let width = header.split(',').count();
    lines
        .map(|(line, l)| {
            let cells: Vec<&str> = l.split(',').map(str::trim).collect();
            if cells.len() != width {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {width} columns, found {}", cells.len()),
                });
            }
            Ok((line, cells))
        })
        .collect()
}

fn cell<T: std::str::FromStr>(line: usize, name: &str, text: &str) -> Result<T> {
    text.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {name} '{text}'"),
    })
}

fn at_line<T>(line: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { .. } => e,
        other => Error::Parse {
            line,
            message: other.to_string(),
        },
    })
}

pub fn parse_scan_csv(text: &str) -> Result<Vec<ScanPoint>> {
    rows(text, SCAN_HEADER)?
        .into_iter()
        .map(|(line, c)| {
            let f: f64 = cell(line, "frequency", c[0])?;
            let s: u64 = cell(line, "successes", c[1])?;
            let n: u64 = cell(line, "trials", c[2])?;
            at_line(line, ScanPoint::new(f, s, n))
        })
        .collect()
}

pub fn parse_flop_csv(text: &str) -> Result<Vec<FlopPoint>> {
    rows(text, FLOP_HEADER)?
        .into_iter()
        .map(|(line, c)| {
            let t: f64 = cell(line, "time", c[0])?;
            let s: u64 = cell(line, "successes", c[1])?;
            let n: u64 = cell(line, "trials", c[2])?;
            at_line(line, FlopPoint::new(t, s, n))
        })
        .collect()
}

pub fn parse_decay_csv(text: &str) -> Result<Vec<DecayPoint>> {
    rows(text, DECAY_HEADER)?
        .into_iter()
        .map(|(line, c)| {
            let time_us: f64 = cell(line, "time", c[0])?;
            let contrast: f64 = cell(line, "contrast", c[1])?;
            if !(0.0..=1.0).contains(&contrast) {
                return Err(Error::Parse {
                    line,
                    message: format!("contrast {contrast} outside [0, 1]"),
                });
            }
            Ok(DecayPoint { time_us, contrast })
        })
        .collect()
}

pub fn scan_csv(points: &[ScanPoint]) -> String {
    let mut out = format!("{SCAN_HEADER}\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.frequency_offset, p.successes, p.trials);
    }
    out
}

pub fn flop_csv(points: &[FlopPoint]) -> String {
    let mut out = format!("{FLOP_HEADER}\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.time_us, p.successes, p.trials);
    }
    out
}

pub fn decay_csv(points: &[DecayPoint]) -> String {
    let mut out = format!("{DECAY_HEADER}\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.time_us, p.contrast);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_round_trip() {
        let pts = vec![ScanPoint::new(-2.5, 3, 100).unwrap(), ScanPoint::new(0.0, 100, 100).unwrap()];
        assert_eq!(parse_scan_csv(&scan_csv(&pts)).unwrap(), pts);
    }

    #[test]
    fn flop_and_decay_round_trip() {
        let f = vec![FlopPoint::new(1.5, 7, 10).unwrap()];
        assert_eq!(parse_flop_csv(&flop_csv(&f)).unwrap(), f);
        let d = vec![DecayPoint { time_us: 10.0, contrast: 0.5 }];
        assert_eq!(parse_decay_csv(&decay_csv(&d)).unwrap(), d);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let line = |r: Result<Vec<ScanPoint>>| match r {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line(parse_scan_csv("wrong\n")), 1);
        assert_eq!(line(parse_scan_csv("freq_offset_khz,successes,trials\n1,2\n")), 2);
        assert_eq!(line(parse_scan_csv("# c\nfreq_offset_khz,successes,trials\n1,2,3\n1,5,3\n")), 4);
        assert_eq!(line(parse_scan_csv("freq_offset_khz,successes,trials\nx,2,3\n")), 2);
    }
}
