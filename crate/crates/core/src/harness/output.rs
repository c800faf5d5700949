use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::trial::TrialRecord;
use super::ExperimentResult;
use crate::Result;

pub fn write_records_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut records = Vec::new();
    for row in r.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

pub fn records_csv_bytes(records: &[TrialRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_records_csv(records, &mut buf)?;
    Ok(buf)
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes `<name>.trials.csv`, `<name>.result.json` and, when plotting is
/// on, `<name>.svg` into `dir`. Returns the paths written.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let name = &result.config.name;
    let csv_path = dir.join(format!("{name}.trials.csv"));
    write_atomic(&csv_path, &records_csv_bytes(&result.records)?)?;
    let json_path = dir.join(format!("{name}.result.json"));
    let mut json = serde_json::to_vec_pretty(result)?;
    json.push(b'\n');
    write_atomic(&json_path, &json)?;
    let mut paths = vec![csv_path, json_path];
    if result.config.plot {
        if let Some(svg) = plot(result) {
            let svg_path = dir.join(format!("{name}.svg"));
            write_atomic(&svg_path, svg.as_bytes())?;
            paths.push(svg_path);
        }
    }
    Ok(paths)
}

fn plot(result: &ExperimentResult) -> Option<String> {
    if let Some(sweep) = &result.aggregates.sweep {
        let points: Vec<(f64, f64)> = sweep.rows.iter().map(|r| (r.degree as f64, r.unsafe_rate)).collect();
        return Some(curve_svg(&format!("{}: unsafe rate by degree", result.config.name), &points));
    }
    let values: Vec<u64> = result
        .records
        .iter()
        .filter_map(|r| r.critical_time.or(if r.truncated { None } else { r.last_change }))
        .collect();
    (!values.is_empty()).then(|| histogram_svg(&format!("{}: step histogram", result.config.name), &values, 40))
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 40.0;

fn frame(title: &str, body: &str, x_range: (f64, f64), y_max: f64) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">
<rect width="100%" height="100%" fill="white"/>
<text x="{PAD}" y="20" font-size="13">{}</text>
<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>
<text x="{PAD}" y="{lb}">{:.0}</text><text x="{r}" y="{lb}" text-anchor="end">{:.0}</text>
<text x="{l}" y="{t}" text-anchor="end">{:.3}</text>
{body}</svg>
"#,
        escape(title),
        x_range.0,
        x_range.1,
        y_max,
        b = H - PAD,
        r = W - PAD,
        lb = H - PAD + 14.0,
        l = PAD - 4.0,
        t = PAD + 4.0,
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn histogram_svg(title: &str, values: &[u64], bins: usize) -> String {
    let lo = values.iter().copied().min().unwrap_or(0);
    let hi = values.iter().copied().max().unwrap_or(0);
    let width = ((hi - lo) / bins as u64 + 1).max(1);
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let top = *counts.iter().max().unwrap_or(&1) as f64;
    let bw = (W - 2.0 * PAD) / bins as f64;
    let mut body = String::new();
    for (i, &c) in counts.iter().enumerate() {
        let h = (H - 2.0 * PAD) * c as f64 / top.max(1.0);
        let _ = writeln!(
            body,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#4a78b0"/>"##,
            PAD + i as f64 * bw,
            H - PAD - h,
            bw * 0.9,
            h
        );
    }
    frame(title, &body, (lo as f64, (lo + width * bins as u64) as f64), top)
}

pub fn curve_svg(title: &str, points: &[(f64, f64)]) -> String {
    let x_lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y_hi = points.iter().map(|p| p.1).fold(0.0, f64::max).max(1e-12);
    let span = (x_hi - x_lo).max(1e-12);
    let xy = |(x, y): (f64, f64)| {
        (PAD + (W - 2.0 * PAD) * (x - x_lo) / span, H - PAD - (H - 2.0 * PAD) * y / y_hi)
    };
    let coords: Vec<String> = points.iter().map(|&p| xy(p)).map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    let mut body = format!(
        r##"<polyline points="{}" fill="none" stroke="#b04a4a" stroke-width="2"/>
"##,
        coords.join(" ")
    );
    for &p in points {
        let (x, y) = xy(p);
        let _ = writeln!(body, r##"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="#b04a4a"/>"##);
    }
    frame(title, &body, (x_lo, x_hi), y_hi)
}
