//! Line-oriented geometry files.
//!
//! ```text
//! # comment
//! path <name> current=<mA> width=<um>
//!   pt <x> <y> <z>
//!   ...
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{CurrentPath, Point3, DEFAULT_MAX_CURRENT_MA};
use crate::{Error, Result};

struct Pending {
    name: String,
    current_ma: f64,
    width_um: f64,
    start_line: usize,
    points: Vec<(usize, Point3)>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_number(line: usize, what: &str, text: &str) -> Result<f64> {
    let v: f64 = text
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what} '{text}'")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what} must be finite")));
    }
    Ok(v)
}

fn key_value<'a>(line: usize, token: &'a str, key: &str) -> Result<&'a str> {
    token
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| parse_err(line, format!("expected {key}=<value>, found '{token}'")))
}

/// Parses geometry text. Line numbers in errors are 1-based.
pub fn parse_geometry(text: &str) -> Result<Vec<CurrentPath>> {
    let mut paths = Vec::new();
    let mut open: Option<Pending> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens[0] {
            "path" => {
                if let Some(p) = &open {
                    return Err(parse_err(
                        line,
                        format!("path '{}' opened on line {} is missing 'end'", p.name, p.start_line),
                    ));
                }
                if tokens.len() != 4 {
                    return Err(parse_err(line, "expected: path <name> current=<mA> width=<um>"));
                }
                let current_ma = parse_number(line, "current", key_value(line, tokens[2], "current")?)?;
                let width_um = parse_number(line, "width", key_value(line, tokens[3], "width")?)?;
                if width_um <= 0.0 {
                    return Err(parse_err(line, "width must be positive"));
                }
                if current_ma.abs() > DEFAULT_MAX_CURRENT_MA {
                    return Err(parse_err(
                        line,
                        format!("current {current_ma} mA exceeds the {DEFAULT_MAX_CURRENT_MA} mA limit"),
                    ));
                }
                open = Some(Pending {
                    name: tokens[1].to_string(),
                    current_ma,
                    width_um,
                    start_line: line,
                    points: Vec::new(),
                });
            }
            "pt" => {
                let p = open
                    .as_mut()
                    .ok_or_else(|| parse_err(line, "'pt' outside of a path block"))?;
                if tokens.len() != 4 {
                    return Err(parse_err(line, "expected: pt <x> <y> <z>"));
                }
                let x = parse_number(line, "x", tokens[1])?;
                let y = parse_number(line, "y", tokens[2])?;
                let z = parse_number(line, "z", tokens[3])?;
                let pt = Point3::new(x, y, z);
                if let Some((_, prev)) = p.points.last() {
                    if *prev == pt {
                        return Err(parse_err(line, "zero-length segment (repeated point)"));
                    }
                }
                p.points.push((line, pt));
            }
            "end" => {
                let p = open
                    .take()
                    .ok_or_else(|| parse_err(line, "'end' without an open path"))?;
                if p.points.len() < 2 {
                    return Err(parse_err(
                        p.start_line,
                        format!("path '{}' has {} point(s); at least 2 are required", p.name, p.points.len()),
                    ));
                }
                let vertices = p.points.into_iter().map(|(_, v)| v).collect();
                let path = CurrentPath::new(p.name, vertices, p.current_ma, p.width_um)
                    .map_err(|e| parse_err(p.start_line, e.to_string()))?;
                paths.push(path);
            }
            other => return Err(parse_err(line, format!("unknown directive '{other}'"))),
        }
    }
    if let Some(p) = open {
        return Err(parse_err(
            p.start_line,
            format!("path '{}' is missing 'end'", p.name),
        ));
    }
    Ok(paths)
}

pub fn read_geometry(path: impl AsRef<Path>) -> Result<Vec<CurrentPath>> {
    parse_geometry(&std::fs::read_to_string(path)?)
}

/// Serialises paths; `parse_geometry(write_geometry(p)) == p` bit for bit.
pub fn write_geometry(paths: &[CurrentPath]) -> String {
    let mut out = String::new();
    for p in paths {
        let _ = writeln!(
            out,
            "path {} current={:?} width={:?}",
            p.name(),
            p.current_ma(),
            p.trace_width_um()
        );
        for v in p.vertices() {
            let _ = writeln!(out, "  pt {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        out.push_str("end\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# two paths
path feed current=300 width=10
  pt 0 -100 0
  pt 0 100 0   # trailing comment
end

path ret current=-150.5 width=12.5
  pt 50 100 0
  pt 50 -100 0
end
";

    #[test]
    fn parses_sample() {
        let paths = parse_geometry(SAMPLE).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].name(), "feed");
        assert_eq!(paths[1].current_ma(), -150.5);
        assert_eq!(paths[1].trace_width_um(), 12.5);
        assert_eq!(paths[0].vertices()[1], Point3::new(0.0, 100.0, 0.0));
    }

    #[test]
    fn round_trip() {
        let paths = parse_geometry(SAMPLE).unwrap();
        assert_eq!(parse_geometry(&write_geometry(&paths)).unwrap(), paths);
    }

    fn err_line(text: &str) -> usize {
        match parse_geometry(text).unwrap_err() {
            Error::Parse { line, .. } => line,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_point_path_reports_its_header_line() {
        assert_eq!(err_line("\npath a current=1 width=1\n pt 0 0 0\nend\n"), 2);
    }

    #[test]
    fn zero_length_segment_reports_repeated_point() {
        assert_eq!(err_line("path a current=1 width=1\n pt 0 0 0\n pt 0 0 0\nend\n"), 3);
    }

    #[test]
    fn other_errors_are_line_numbered() {
        assert_eq!(err_line("pt 0 0 0\n"), 1);
        assert_eq!(err_line("path a current=x width=1\n"), 1);
        assert_eq!(err_line("path a current=1 width=1\n pt 0 0\n"), 2);
        assert_eq!(err_line("path a current=1 width=1\n pt 0 0 0\n pt 1 0 0\n"), 1);
        assert_eq!(err_line("end\n"), 1);
        assert_eq!(err_line("path a current=1 width=1\nbogus\n"), 2);
        assert_eq!(err_line("path a current=900 width=1\n"), 1);
    }
}
