//! Plain-text registration reports and one-line summary records.
//!
//! A report has four sections: `[transform]` (row-major 4x4), `[metrics]`
//! (`key = value`), `[config]` (the run's config file) and `[trace]` (a
//! whitespace table with one row per iteration).

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use nalgebra::Matrix4;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::io::fmt17;
use crate::optimizer::{IterationRecord, IterationTrace};
use crate::pipeline::RegistrationReport;

const TRACE_COLUMNS: &str = "iteration energy temperature accept_rate lam_rate accepted angle translation";

pub const SUMMARY_HEADER: &str =
    "name\tang_err\trmsd\truntime\titerations\tremoved_source\tremoved_target\tresampled_source\tresampled_target";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), fmt17)
}

pub fn format_transform(t: &RigidTransform) -> String {
    let m = t.to_homogeneous();
    let mut out = String::new();
    for r in 0..4 {
        let row: Vec<String> = (0..4).map(|c| fmt17(m[(r, c)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn format_report(report: &RegistrationReport) -> String {
    let mut out = String::from("[transform]\n");
    out.push_str(&format_transform(&report.transform));
    out.push_str("\n[metrics]\n");
    out.push_str(&format!("ang_err = {}\n", opt(report.ang_err)));
    out.push_str(&format!("rmsd = {}\n", opt(report.rmsd)));
    out.push_str(&format!("runtime = {}\n", fmt17(report.runtime)));
    out.push_str(&format!("iterations = {}\n", report.iterations));
    out.push_str(&format!(
        "outliers_removed = {} {}\n",
        report.outliers_removed.0, report.outliers_removed.1
    ));
    out.push_str(&format!(
        "resampled_sizes = {} {}\n",
        report.resampled_sizes.0, report.resampled_sizes.1
    ));
    out.push_str(&format!("beta_outside_basin = {}\n", report.trace.beta_outside_basin));
    out.push_str("\n[config]\n");
    out.push_str(&report.config.to_toml());
    out.push_str("\n[trace]\n");
    out.push_str(TRACE_COLUMNS);
    out.push('\n');
    for (i, r) in report.trace.records.iter().enumerate() {
        out.push_str(&format!(
            "{i} {} {} {} {} {} {} {}\n",
            fmt17(r.energy),
            fmt17(r.temperature),
            fmt17(r.accept_rate),
            fmt17(r.lam_rate),
            u8::from(r.accepted),
            fmt17(r.angle),
            fmt17(r.translation)
        ));
    }
    out
}

pub fn write_report(report: &RegistrationReport, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_report(report))?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<RegistrationReport> {
    parse_report(&fs::read_to_string(path)?)
}

/// Splits the text into `(section name, first line number, lines)`.
fn sections(text: &str) -> Result<Vec<(&str, usize, Vec<&str>)>> {
    let mut out: Vec<(&str, usize, Vec<&str>)> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if !name.contains('.') && !name.contains('"') {
                out.push((name, no + 2, Vec::new()));
                continue;
            }
        }
        match out.last_mut() {
            Some((_, _, lines)) => lines.push(line),
            None if line.trim().is_empty() || line.starts_with('#') => {}
            None => return Err(Error::parse(format!("line {}", no + 1), "text before the first section")),
        }
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(format!("line {line}"), format!("`{s}` is not a valid number")))
}

fn pair(s: &str, line: usize) -> Result<(usize, usize)> {
    let v: Vec<&str> = s.split_whitespace().collect();
    match v.as_slice() {
        [a, b] => Ok((num(a, line)?, num(b, line)?)),
        _ => Err(Error::parse(format!("line {line}"), "expected two counts")),
    }
}

/// Four non-blank rows of four numbers; `first` is the line number of
/// `lines[0]`.
fn matrix_rows(lines: &[&str], first: usize) -> Result<RigidTransform> {
    let rows: Vec<(usize, &str)> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| (first + i, *l))
        .collect();
    if rows.len() != 4 {
        return Err(Error::parse(format!("line {first}"), format!("transform needs 4 rows, found {}", rows.len())));
    }
    let mut m = Matrix4::zeros();
    for (r, (line, text)) in rows.iter().enumerate() {
        let vals: Vec<&str> = text.split_whitespace().collect();
        if vals.len() != 4 {
            return Err(Error::parse(format!("line {line}"), "transform rows need 4 values"));
        }
        for (c, v) in vals.iter().enumerate() {
            m[(r, c)] = num(v, *line)?;
        }
    }
    RigidTransform::from_homogeneous(&m)
}

/// A rigid transform from either a bare 4x4 row-major matrix (`#` comments
/// allowed) or the `[transform]` section of a report.
pub fn parse_transform(text: &str) -> Result<RigidTransform> {
    if text.lines().any(|l| l.trim() == "[transform]") {
        return sections(text)?
            .into_iter()
            .find(|(name, _, _)| *name == "transform")
            .map(|(_, first, lines)| matrix_rows(&lines, first))
            .expect("section present");
    }
    let lines: Vec<&str> = text.lines().collect();
    matrix_rows(&lines, 1)
}

pub fn read_transform(path: impl AsRef<Path>) -> Result<RigidTransform> {
    parse_transform(&fs::read_to_string(path)?)
}

pub fn parse_report(text: &str) -> Result<RegistrationReport> {
    let mut transform = None;
    let mut config = None;
    let mut metrics = std::collections::HashMap::new();
    let mut trace = IterationTrace::default();
    for (name, first, lines) in sections(text)? {
        match name {
            "transform" => transform = Some(matrix_rows(&lines, first)?),
            "metrics" => {
                for (i, line) in lines.iter().enumerate() {
                    if let Some((k, v)) = line.split_once('=') {
                        metrics.insert(k.trim().to_string(), (v.trim().to_string(), first + i));
                    }
                }
            }
            "config" => config = Some(Config::from_toml(&lines.join("\n"))?),
            "trace" => {
                for (i, line) in lines.iter().enumerate().skip(1) {
                    let no = first + i;
                    let v: Vec<&str> = line.split_whitespace().collect();
                    if v.is_empty() {
                        continue;
                    }
                    if v.len() != 8 {
                        return Err(Error::parse(format!("line {no}"), "trace rows need 8 columns"));
                    }
                    trace.records.push(IterationRecord {
                        energy: num(v[1], no)?,
                        temperature: num(v[2], no)?,
                        accept_rate: num(v[3], no)?,
                        lam_rate: num(v[4], no)?,
                        accepted: num::<u8>(v[5], no)? != 0,
                        angle: num(v[6], no)?,
                        translation: num(v[7], no)?,
                    });
                }
            }
            other => return Err(Error::parse(format!("line {}", first - 1), format!("unknown section `{other}`"))),
        }
    }
    let get = |k: &str| {
        metrics
            .get(k)
            .ok_or_else(|| Error::parse("metrics", format!("missing `{k}`")))
    };
    let optional = |k: &str| -> Result<Option<f64>> {
        let (v, line) = get(k)?;
        if v == "none" {
            Ok(None)
        } else {
            num(v, *line).map(Some)
        }
    };
    let (runtime, rl) = get("runtime")?;
    let (iterations, il) = get("iterations")?;
    let (removed, ol) = get("outliers_removed")?;
    let (sizes, sl) = get("resampled_sizes")?;
    trace.beta_outside_basin = get("beta_outside_basin")?.0 == "true";
    Ok(RegistrationReport {
        transform: transform.ok_or_else(|| Error::parse("report", "missing [transform] section"))?,
        ang_err: optional("ang_err")?,
        rmsd: optional("rmsd")?,
        runtime: num(runtime, *rl)?,
        iterations: num(iterations, *il)?,
        outliers_removed: pair(removed, *ol)?,
        resampled_sizes: pair(sizes, *sl)?,
        trace,
        config: config.ok_or_else(|| Error::parse("report", "missing [config] section"))?,
    })
}

pub fn summary_row(name: &str, report: &RegistrationReport) -> String {
    format!(
        "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        opt(report.ang_err),
        opt(report.rmsd),
        fmt17(report.runtime),
        report.iterations,
        report.outliers_removed.0,
        report.outliers_removed.1,
        report.resampled_sizes.0,
        report.resampled_sizes.1
    )
}

/// Appends a summary row, writing the header first if the file is new or
/// empty.
pub fn append_summary(path: impl AsRef<Path>, name: &str, report: &RegistrationReport) -> Result<()> {
    let path = path.as_ref();
    let fresh = fs::metadata(path).map_or(true, |m| m.len() == 0);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{SUMMARY_HEADER}")?;
    }
    writeln!(f, "{}", summary_row(name, report))?;
    Ok(())
}
