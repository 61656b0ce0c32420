//! Trajectory CSV with header `rx_id,t,x,y,z,speed,hx,hy,hz`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Trajectory, TrajectorySample};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const TRAJECTORY_HEADER: [&str; 9] = ["rx_id", "t", "x", "y", "z", "speed", "hx", "hy", "hz"];

#[derive(Deserialize, Serialize)]
struct Row {
    rx_id: String,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    speed: f64,
    hx: f64,
    hy: f64,
    hz: f64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(path, line, e.to_string())
}

/// Trajectories grouped by `rx_id` in order of first appearance, each sorted by time.
pub fn parse_csv_trajectories<R: std::io::Read>(input: R, path: &Path) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().ne(TRAJECTORY_HEADER.iter().copied()) {
        return Err(Error::parse(path, 1, format!("expected header `{}`", TRAJECTORY_HEADER.join(","))));
    }
    let mut order = Vec::new();
    let mut groups: HashMap<String, Vec<(usize, TrajectorySample)>> = HashMap::new();
    for rec in rdr.deserialize::<Row>() {
        let row = rec.map_err(|e| csv_error(path, e))?;
        let line = groups.values().map(Vec::len).sum::<usize>() + 2;
        let heading = Vec3::new(row.hx, row.hy, row.hz).try_normalize().unwrap_or(Vec3::ZERO);
        let list = groups.entry(row.rx_id.clone()).or_insert_with(|| {
            order.push(row.rx_id.clone());
            Vec::new()
        });
        list.push((
            line,
            TrajectorySample {
                t_s: row.t,
                position: Vec3::new(row.x, row.y, row.z),
                speed_mps: row.speed,
                heading,
            },
        ));
    }
    order
        .into_iter()
        .map(|id| {
            let mut rows = groups.remove(&id).expect("listed id");
            rows.sort_by(|a, b| a.1.t_s.total_cmp(&b.1.t_s));
            for w in rows.windows(2) {
                if w[0].1.t_s == w[1].1.t_s {
                    return Err(Error::parse(path, w[1].0, format!("duplicate time {} for `{id}`", w[1].1.t_s)));
                }
            }
            Trajectory::new(id, rows.into_iter().map(|(_, s)| s).collect())
        })
        .collect()
}

pub fn load_csv_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_trajectories(f, path)
}

pub fn write_csv_trajectories(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for tr in trajectories {
        for s in &tr.samples {
            w.serialize(Row {
                rx_id: tr.receiver_id.clone(),
                t: s.t_s,
                x: s.position.x,
                y: s.position.y,
                z: s.position.z,
                speed: s.speed_mps,
                hx: s.heading.x,
                hy: s.heading.y,
                hz: s.heading.z,
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Vec<Trajectory>> {
        parse_csv_trajectories(s.as_bytes(), Path::new("t.csv"))
    }

    #[test]
    fn three_rows_one_receiver() {
        let t = parse("rx_id,t,x,y,z,speed,hx,hy,hz\na,0,0,0,1.5,1,1,0,0\na,1,1,0,1.5,1,1,0,0\na,2,2,0,1.5,1,1,0,0\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].samples.len(), 3);
    }

    #[test]
    fn interleaved_ids_are_grouped_and_sorted() {
        let t = parse("rx_id,t,x,y,z,speed,hx,hy,hz\na,1,1,0,0,1,1,0,0\nb,0,0,0,0,1,1,0,0\na,0,0,0,0,1,1,0,0\nb,1,0,1,0,1,0,1,0\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].receiver_id, "a");
        assert_eq!(t[0].samples[0].t_s, 0.0);
        assert_eq!(t[1].samples[1].position, Vec3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn ragged_row_reports_line() {
        let e = parse("rx_id,t,x,y,z,speed,hx,hy,hz\na,0,0,0,1.5,1,1,0,0\na,1,1,0\n").unwrap_err().to_string();
        assert!(e.contains(":3:"), "{e}");
    }

    #[test]
    fn wrong_header() {
        assert!(parse("id,t,x\n").is_err());
    }
}
