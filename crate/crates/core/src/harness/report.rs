//! Aggregated error-vs-horizon tables, axis-usage matrices and summaries.
//!
//! `per_track_errors.csv` and `selections.csv` hold everything the other
//! files are derived from, so reports can be regenerated from them alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::pipeline::{Method, TrackOutcome};
use super::HarnessError;
use crate::bac::AxisSelection;

pub const ERRORS_FILE: &str = "errors_vs_horizon.csv";
pub const PER_TRACK_FILE: &str = "per_track_errors.csv";
pub const USAGE_FILE: &str = "axis_usage.csv";
pub const SELECTIONS_FILE: &str = "selections.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Per-track geodesic errors of one method over a shared horizon grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodReport {
    pub method: String,
    pub horizons: Vec<f64>,
    pub track_ids: Vec<usize>,
    /// `errors[track][horizon]` in rad.
    pub errors: Vec<Vec<f64>>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl MethodReport {
    pub fn from_outcomes(methods: &[Method], outcomes: &[TrackOutcome]) -> Vec<MethodReport> {
        let horizons = outcomes
            .first()
            .map(|o| o.horizons.clone())
            .unwrap_or_default();
        methods
            .iter()
            .enumerate()
            .map(|(m, method)| MethodReport {
                method: method.name(),
                horizons: horizons.clone(),
                track_ids: outcomes.iter().map(|o| o.track_id).collect(),
                errors: outcomes.iter().map(|o| o.errors[m].clone()).collect(),
            })
            .collect()
    }

    fn column(&self, h: usize) -> Vec<f64> {
        self.errors.iter().map(|e| e[h]).collect()
    }

    pub fn median(&self, h: usize) -> f64 {
        median(&mut self.column(h))
    }

    pub fn mean(&self, h: usize) -> f64 {
        let c = self.column(h);
        c.iter().sum::<f64>() / c.len() as f64
    }

    /// Index of the grid horizon nearest to `h`.
    pub fn horizon_index(&self, h: f64) -> Option<usize> {
        (0..self.horizons.len()).min_by(|&a, &b| {
            (self.horizons[a] - h)
                .abs()
                .total_cmp(&(self.horizons[b] - h).abs())
        })
    }

    /// Per horizon, the mean over shared tracks of `100·e_AVE/e_method`, over
    /// tracks where both errors are positive.
    pub fn ratio_vs(&self, ave: &MethodReport) -> Vec<Option<f64>> {
        let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = self
            .track_ids
            .iter()
            .zip(&self.errors)
            .filter_map(|(id, e)| {
                ave.track_ids
                    .iter()
                    .position(|a| a == id)
                    .map(|j| (e, &ave.errors[j]))
            })
            .collect();
        (0..self.horizons.len())
            .map(|h| {
                let ratios: Vec<f64> = pairs
                    .iter()
                    .filter(|(e, a)| e[h] > 0.0 && a[h] > 0.0)
                    .map(|(e, a)| 100.0 * a[h] / e[h])
                    .collect();
                (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
            })
            .collect()
    }
}

/// One axis selection made at an aided/open-loop boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionRecord {
    pub track_id: usize,
    /// Length of the aided window (s).
    pub boundary: f64,
    pub chosen: [usize; 3],
    pub det: f64,
    pub window_p: usize,
}

/// How often each IMU's axis was selected.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisUsageReport {
    pub imus: usize,
    pub records: Vec<SelectionRecord>,
}

impl AxisUsageReport {
    pub fn from_selections(imus: usize, selections: Vec<(usize, f64, AxisSelection)>) -> Self {
        AxisUsageReport {
            imus,
            records: selections
                .into_iter()
                .map(|(track_id, boundary, s)| SelectionRecord {
                    track_id,
                    boundary,
                    chosen: s.chosen,
                    det: s.det,
                    window_p: s.window_p,
                })
                .collect(),
        }
    }

    /// `frequency[imu][axis]`; each axis column sums to one when any selection exists.
    pub fn frequencies(&self) -> Vec<[f64; 3]> {
        let mut counts = vec![[0usize; 3]; self.imus];
        for r in &self.records {
            for axis in 0..3 {
                counts[r.chosen[axis]][axis] += 1;
            }
        }
        let total = self.records.len().max(1) as f64;
        counts.iter().map(|c| c.map(|v| v as f64 / total)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportPaths {
    pub errors: PathBuf,
    pub per_track: PathBuf,
    pub usage: PathBuf,
    pub selections: PathBuf,
    pub summary: PathBuf,
}

fn ratio_enabled(reports: &[MethodReport]) -> Option<&MethodReport> {
    if reports.len() < 2 {
        return None;
    }
    reports.iter().find(|r| r.method == "AVE")
}

fn errors_table(reports: &[MethodReport]) -> String {
    let ave = ratio_enabled(reports);
    let mut out = String::from("horizon_s");
    for r in reports {
        let _ = write!(out, ",{0}_median_rad,{0}_mean_rad", r.method);
        if ave.is_some() {
            let _ = write!(out, ",{}_ratio_pct", r.method);
        }
    }
    out.push('\n');
    let ratios: Vec<Vec<Option<f64>>> = match ave {
        Some(a) => reports.iter().map(|r| r.ratio_vs(a)).collect(),
        None => Vec::new(),
    };
    for h in 0..reports[0].horizons.len() {
        let _ = write!(out, "{:.3}", reports[0].horizons[h]);
        for (m, r) in reports.iter().enumerate() {
            let _ = write!(out, ",{:.6e},{:.6e}", r.median(h), r.mean(h));
            if ave.is_some() {
                match ratios[m][h] {
                    Some(v) => {
                        let _ = write!(out, ",{v:.3}");
                    }
                    None => out.push(','),
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Rows `track_id,method,horizon_s,error_rad` with exact error values.
pub fn per_track_table(reports: &[MethodReport]) -> String {
    let mut out = String::from("track_id,method,horizon_s,error_rad\n");
    for r in reports {
        for (id, errs) in r.track_ids.iter().zip(&r.errors) {
            for (h, e) in r.horizons.iter().zip(errs) {
                let _ = writeln!(out, "{id},{},{h:.3},{e:?}", r.method);
            }
        }
    }
    out
}

fn usage_table(usage: &AxisUsageReport) -> String {
    let mut out = String::from("imu,x,y,z\n");
    for (i, f) in usage.frequencies().iter().enumerate() {
        let _ = writeln!(out, "{i},{:.6},{:.6},{:.6}", f[0], f[1], f[2]);
    }
    out
}

fn selections_table(usage: &AxisUsageReport) -> String {
    let mut out = String::from("track_id,boundary_s,imus,imu_x,imu_y,imu_z,det,window_p\n");
    for r in &usage.records {
        let _ = writeln!(
            out,
            "{},{:.3},{},{},{},{},{:?},{}",
            r.track_id,
            r.boundary,
            usage.imus,
            r.chosen[0],
            r.chosen[1],
            r.chosen[2],
            r.det,
            r.window_p
        );
    }
    out
}

fn summary(reports: &[MethodReport], usage: &AxisUsageReport) -> String {
    let mut out = String::new();
    let tracks = reports[0].track_ids.len();
    let _ = writeln!(out, "tracks: {tracks}");
    let _ = writeln!(
        out,
        "methods: {}",
        reports
            .iter()
            .map(|r| r.method.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    );
    let last = *reports[0].horizons.last().expect("non-empty grid");
    let one = reports[0]
        .horizon_index(1.0f64.min(last))
        .expect("non-empty grid");
    let h1 = reports[0].horizons[one];
    let _ = writeln!(out, "median error at {h1:.3} s (rad):");
    for r in reports {
        let _ = writeln!(out, "  {}: {:.6e}", r.method, r.median(one));
    }
    if let (Some(ave), Some(bac)) = (
        ratio_enabled(reports),
        reports.iter().find(|r| r.method == "BAC"),
    ) {
        let ratio = bac.ratio_vs(ave);
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            out,
            "BAC mean ratio vs AVE at {h1:.3} s: {} %",
            fmt(ratio[one])
        );
        let _ = writeln!(
            out,
            "BAC median ratio vs AVE at {h1:.3} s: {:.3} %",
            100.0 * ave.median(one) / bac.median(one)
        );
        let drop = (1..bac.horizons.len()).find(|&h| ratio[h].is_some_and(|v| v < 100.0));
        match drop {
            Some(h) => {
                let _ = writeln!(
                    out,
                    "BAC advantage over AVE drops below 0% at {:.3} s",
                    bac.horizons[h]
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "BAC advantage over AVE stays at or above 0% up to {last:.3} s"
                );
            }
        }
    }
    let _ = writeln!(out, "axis selections: {}", usage.records.len());
    out
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn emit_reports(
    reports: &[MethodReport],
    usage: &AxisUsageReport,
    out_dir: &Path,
) -> Result<ReportPaths, HarnessError> {
    let empty = reports.is_empty()
        || reports
            .iter()
            .any(|r| r.track_ids.is_empty() || r.horizons.len() < 2)
        || reports.iter().any(|r| r.horizons != reports[0].horizons);
    if empty {
        return Err(HarnessError::NothingToReport);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let paths = ReportPaths {
        errors: out_dir.join(ERRORS_FILE),
        per_track: out_dir.join(PER_TRACK_FILE),
        usage: out_dir.join(USAGE_FILE),
        selections: out_dir.join(SELECTIONS_FILE),
        summary: out_dir.join(SUMMARY_FILE),
    };
    write(&paths.errors, &errors_table(reports))?;
    write(&paths.per_track, &per_track_table(reports))?;
    write(&paths.usage, &usage_table(usage))?;
    write(&paths.selections, &selections_table(usage))?;
    write(&paths.summary, &summary(reports, usage))?;
    Ok(paths)
}

fn parse_err(path: &Path, line: usize, column: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        path: path.into(),
        line,
        column,
        message: message.into(),
    }
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    fields: &[&str],
    col: usize,
) -> Result<T, HarnessError> {
    fields.get(col).and_then(|f| f.parse().ok()).ok_or_else(|| {
        parse_err(
            path,
            line,
            col + 1,
            format!("bad value `{}`", fields.get(col).unwrap_or(&"")),
        )
    })
}

fn data_lines<'a>(
    path: &Path,
    text: &'a str,
    header: &str,
) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>, HarnessError> {
    if text.lines().next() != Some(header) {
        return Err(HarnessError::Schema {
            path: path.into(),
            message: format!("expected header `{header}`"),
        });
    }
    Ok(text
        .lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 1, l.split(',').collect())))
}

/// Rebuilds reports from the per-track error and selection tables in `dir`.
pub fn load_reports(dir: &Path) -> Result<(Vec<MethodReport>, AxisUsageReport), HarnessError> {
    let path = dir.join(PER_TRACK_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut table: BTreeMap<String, BTreeMap<usize, Vec<(f64, f64)>>> = BTreeMap::new();
    for (line, f) in data_lines(&path, &text, "track_id,method,horizon_s,error_rad")? {
        if f.len() != 4 {
            return Err(parse_err(
                &path,
                line,
                f.len().min(4) + 1,
                "expected 4 fields",
            ));
        }
        let id: usize = parse_field(&path, line, &f, 0)?;
        let method = f[1].to_string();
        let h: f64 = parse_field(&path, line, &f, 2)?;
        let e: f64 = parse_field(&path, line, &f, 3)?;
        if !order.contains(&method) {
            order.push(method.clone());
        }
        table
            .entry(method)
            .or_default()
            .entry(id)
            .or_default()
            .push((h, e));
    }
    let reports: Vec<MethodReport> = order
        .iter()
        .map(|m| {
            let tracks = &table[m];
            let horizons = tracks
                .values()
                .next()
                .map(|v| v.iter().map(|p| p.0).collect())
                .unwrap_or_default();
            MethodReport {
                method: m.clone(),
                horizons,
                track_ids: tracks.keys().copied().collect(),
                errors: tracks
                    .values()
                    .map(|v| v.iter().map(|p| p.1).collect())
                    .collect(),
            }
        })
        .collect();

    let path = dir.join(SELECTIONS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let mut imus = 0;
    let mut records = Vec::new();
    for (line, f) in data_lines(
        &path,
        &text,
        "track_id,boundary_s,imus,imu_x,imu_y,imu_z,det,window_p",
    )? {
        if f.len() != 8 {
            return Err(parse_err(
                &path,
                line,
                f.len().min(8) + 1,
                "expected 8 fields",
            ));
        }
        imus = parse_field(&path, line, &f, 2)?;
        let chosen = [
            parse_field(&path, line, &f, 3)?,
            parse_field(&path, line, &f, 4)?,
            parse_field(&path, line, &f, 5)?,
        ];
        if chosen.iter().any(|c: &usize| *c >= imus) {
            return Err(parse_err(&path, line, 4, "selected IMU out of range"));
        }
        records.push(SelectionRecord {
            track_id: parse_field(&path, line, &f, 0)?,
            boundary: parse_field(&path, line, &f, 1)?,
            chosen,
            det: parse_field(&path, line, &f, 6)?,
            window_p: parse_field(&path, line, &f, 7)?,
        });
    }
    Ok((reports, AxisUsageReport { imus, records }))
}
