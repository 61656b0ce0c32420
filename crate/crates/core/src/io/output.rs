//! Power traces, heatmaps and benchmark reports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fmt::g6;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const POWER_TRACE_HEADER: &str =
    "t,rx_id,x,y,z,power_dbm,n_paths,los,delay_spread_s,doppler_mean_hz,doppler_spread_hz,segment,cache_hits";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTraceRow {
    pub t_s: f64,
    pub rx_id: String,
    pub position: Vec3,
    /// `None` when no path reaches the receiver.
    pub power_dbm: Option<f64>,
    pub n_paths: usize,
    pub los: bool,
    pub delay_spread_s: f64,
    pub doppler_mean_hz: f64,
    pub doppler_spread_hz: f64,
    pub segment_index: usize,
    pub cache_hits: u64,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn power_trace_string(rows: &[PowerTraceRow]) -> String {
    let mut s = String::with_capacity(64 + rows.len() * 120);
    s.push_str(POWER_TRACE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            g6(r.t_s),
            r.rx_id,
            g6(r.position.x),
            g6(r.position.y),
            g6(r.position.z),
            r.power_dbm.map_or_else(|| "-inf".to_string(), g6),
            r.n_paths,
            u8::from(r.los),
            g6(r.delay_spread_s),
            g6(r.doppler_mean_hz),
            g6(r.doppler_spread_hz),
            r.segment_index,
            r.cache_hits
        );
    }
    s
}

pub fn write_power_trace(rows: &[PowerTraceRow], path: &Path) -> Result<()> {
    write_file(path, &power_trace_string(rows))
}

pub fn parse_power_trace(text: &str, path: &Path) -> Result<Vec<PowerTraceRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(POWER_TRACE_HEADER) {
        return Err(Error::parse(path, 1, "unexpected power trace header"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return Err(Error::parse(path, ln, format!("expected 13 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(path, ln, format!("bad number `{s}`")));
        let int = |s: &str| s.parse::<u64>().map_err(|_| Error::parse(path, ln, format!("bad integer `{s}`")));
        let power = num(f[5])?;
        rows.push(PowerTraceRow {
            t_s: num(f[0])?,
            rx_id: f[1].to_string(),
            position: Vec3::new(num(f[2])?, num(f[3])?, num(f[4])?),
            power_dbm: power.is_finite().then_some(power),
            n_paths: int(f[6])? as usize,
            los: int(f[7])? != 0,
            delay_spread_s: num(f[8])?,
            doppler_mean_hz: num(f[9])?,
            doppler_spread_hz: num(f[10])?,
            segment_index: int(f[11])? as usize,
            cache_hits: int(f[12])?,
        });
    }
    Ok(rows)
}

pub fn read_power_trace(path: &Path) -> Result<Vec<PowerTraceRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_power_trace(&text, path)
}

/// Received power on a regular grid of receivers. Cell `(i, j)` is centered
/// at `origin + ((i + ½)·cell, (j + ½)·cell)`; row 0 is the minimum y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub origin: Vec3,
    pub cell_m: f64,
    pub nx: usize,
    pub ny: usize,
    pub rx_height_m: f64,
    /// Row-major, `values[j * nx + i]`; `-inf` where no path arrives.
    pub values: Vec<f64>,
}

impl HeatmapGrid {
    pub fn new(origin: Vec3, cell_m: f64, nx: usize, ny: usize, rx_height_m: f64) -> Result<HeatmapGrid> {
        if !(cell_m > 0.0) || nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument("heatmap needs a positive cell size and at least one cell".into()));
        }
        Ok(HeatmapGrid {
            origin,
            cell_m,
            nx,
            ny,
            rx_height_m,
            values: vec![f64::NEG_INFINITY; nx * ny],
        })
    }

    /// Grid covering `[x0, x1] × [y0, y1]`, rounding partial cells up.
    pub fn covering(x0: f64, y0: f64, x1: f64, y1: f64, cell_m: f64, rx_height_m: f64) -> Result<HeatmapGrid> {
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::InvalidArgument(format!("region {x0},{y0},{x1},{y1} has zero area")));
        }
        if !(cell_m > 0.0) {
            return Err(Error::InvalidArgument("cell size must be positive".into()));
        }
        let nx = (((x1 - x0) / cell_m) - 1e-9).ceil().max(1.0) as usize;
        let ny = (((y1 - y0) / cell_m) - 1e-9).ceil().max(1.0) as usize;
        HeatmapGrid::new(Vec3::new(x0, y0, 0.0), cell_m, nx, ny, rx_height_m)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec3 {
        Vec3::new(
            self.origin.x + (i as f64 + 0.5) * self.cell_m,
            self.origin.y + (j as f64 + 0.5) * self.cell_m,
            self.origin.z + self.rx_height_m,
        )
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }
}

pub fn heatmap_string(grid: &HeatmapGrid) -> String {
    let mut s = String::new();
    let o = grid.origin;
    let _ = writeln!(
        s,
        "# origin={},{},{} cell={} nx={} ny={} height={}",
        g6(o.x),
        g6(o.y),
        g6(o.z),
        g6(grid.cell_m),
        grid.nx,
        grid.ny,
        g6(grid.rx_height_m)
    );
    for j in 0..grid.ny {
        let row: Vec<String> = (0..grid.nx).map(|i| g6(grid.get(i, j))).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn write_heatmap(grid: &HeatmapGrid, path: &Path) -> Result<()> {
    write_file(path, &heatmap_string(grid))
}

pub fn parse_heatmap(text: &str, path: &Path) -> Result<HeatmapGrid> {
    let mut origin = None;
    let (mut cell, mut nx, mut ny, mut height) = (None, None, None, None);
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        if let Some(meta) = line.strip_prefix('#') {
            for tok in meta.split_whitespace() {
                let Some((k, v)) = tok.split_once('=') else { continue };
                let bad = || Error::parse(path, ln, format!("bad value in `{tok}`"));
                match k {
                    "origin" => {
                        let c: Vec<f64> = v.split(',').map(|x| x.parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
                        if c.len() != 3 {
                            return Err(bad());
                        }
                        origin = Some(Vec3::new(c[0], c[1], c[2]));
                    }
                    "cell" => cell = Some(v.parse::<f64>().map_err(|_| bad())?),
                    "nx" => nx = Some(v.parse::<usize>().map_err(|_| bad())?),
                    "ny" => ny = Some(v.parse::<usize>().map_err(|_| bad())?),
                    "height" => height = Some(v.parse::<f64>().map_err(|_| bad())?),
                    _ => {}
                }
            }
            continue;
        }
        for x in line.split(',') {
            values.push(x.parse::<f64>().map_err(|_| Error::parse(path, ln, format!("bad value `{x}`")))?);
        }
    }
    let missing = |k: &str| Error::parse(path, 1, format!("missing `{k}` in header"));
    let mut grid = HeatmapGrid::new(
        origin.ok_or_else(|| missing("origin"))?,
        cell.ok_or_else(|| missing("cell"))?,
        nx.ok_or_else(|| missing("nx"))?,
        ny.ok_or_else(|| missing("ny"))?,
        height.ok_or_else(|| missing("height"))?,
    )?;
    if values.len() != grid.values.len() {
        return Err(Error::parse(path, 1, format!("expected {} values, got {}", grid.values.len(), values.len())));
    }
    grid.values = values;
    Ok(grid)
}

pub fn read_heatmap(path: &Path) -> Result<HeatmapGrid> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_heatmap(&text, path)
}

pub const BENCH_HEADER: &str = "scenario,area_width_m,n_objects,wall_time_s,rays_cast,cache_hit_rate";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReportRow {
    pub scenario: String,
    pub area_width_m: f64,
    pub n_objects: usize,
    pub wall_time_s: f64,
    pub rays_cast: u64,
    pub cache_hit_rate: f64,
}

pub fn bench_report_string(rows: &[BenchReportRow]) -> String {
    let mut s = String::from(BENCH_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.scenario,
            g6(r.area_width_m),
            r.n_objects,
            g6(r.wall_time_s),
            r.rays_cast,
            g6(r.cache_hit_rate)
        );
    }
    s
}

pub fn write_bench_report(rows: &[BenchReportRow], path: &Path) -> Result<()> {
    write_file(path, &bench_report_string(rows))
}

/// Writes `value` as pretty JSON.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })?;
    write_file(path, &(text + "\n"))
}

/// `out.csv` → `out.summary.json`.
pub fn summary_path(out: &Path) -> std::path::PathBuf {
    out.with_extension("summary.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(power: Option<f64>) -> PowerTraceRow {
        PowerTraceRow {
            t_s: 0.1,
            rx_id: "rx0".into(),
            position: Vec3::new(100.0, 0.0, 1.5),
            power_dbm: power,
            n_paths: usize::from(power.is_some()),
            los: power.is_some(),
            delay_spread_s: 0.0,
            doppler_mean_hz: 0.0,
            doppler_spread_hz: 0.0,
            segment_index: 0,
            cache_hits: 0,
        }
    }

    #[test]
    fn header_only_when_empty() {
        assert_eq!(power_trace_string(&[]), format!("{POWER_TRACE_HEADER}\n"));
    }

    #[test]
    fn friis_row_and_sentinel() {
        let s = power_trace_string(&[row(Some(-31.98)), row(None)]);
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[1].contains(",-31.9800,1,1,"), "{}", lines[1]);
        assert!(lines[2].contains(",-inf,0,0,"), "{}", lines[2]);
        let back = parse_power_trace(&s, Path::new("x")).unwrap();
        assert_eq!(back[1].power_dbm, None);
        assert_eq!(back[0].position, Vec3::new(100.0, 0.0, 1.5));
    }

    #[test]
    fn heatmap_round_trip() {
        let mut g = HeatmapGrid::new(Vec3::new(-5.0, 2.5, 0.0), 5.0, 2, 2, 1.5).unwrap();
        g.values = vec![-40.125, -50.0, f64::NEG_INFINITY, -61.5];
        let back = parse_heatmap(&heatmap_string(&g), Path::new("h")).unwrap();
        assert_eq!(back, g);
        let one = HeatmapGrid::new(Vec3::ZERO, 1.0, 1, 1, 1.5).unwrap();
        assert_eq!(heatmap_string(&one).lines().count(), 2);
    }

    #[test]
    fn covering_rounds_up() {
        let g = HeatmapGrid::covering(0.0, 0.0, 100.0, 12.0, 5.0, 1.5).unwrap();
        assert_eq!((g.nx, g.ny), (20, 3));
        assert!(HeatmapGrid::covering(0.0, 0.0, 0.0, 10.0, 5.0, 1.5).is_err());
    }
}
