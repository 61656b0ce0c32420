//! SUMO floating-car-data export:
//! `<timestep time="T"><vehicle id=".." x=".." y=".." speed=".." angle=".."/></timestep>`.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::dynamics::{Trajectory, TrajectorySample};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Heading for a SUMO angle: degrees clockwise from north (+y).
pub fn heading_from_angle(deg: f64) -> Vec3 {
    let a = deg.to_radians();
    Vec3::new(a.sin(), a.cos(), 0.0)
}

fn attr(e: &BytesStart, name: &str, context: &str, path: &Path, pos: u64) -> Result<String> {
    let a = e
        .try_get_attribute(name)
        .map_err(|err| format_error(path, pos, format!("{context}: {err}")))?
        .ok_or_else(|| format_error(path, pos, format!("{context}: missing attribute `{name}`")))?;
    let v = a.unescape_value().map_err(|err| format_error(path, pos, format!("{context}: {err}")))?;
    Ok(v.into_owned())
}

fn num(e: &BytesStart, name: &str, context: &str, path: &Path, pos: u64) -> Result<f64> {
    let s = attr(e, name, context, path, pos)?;
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format_error(path, pos, format!("{context}: attribute `{name}` is not a number: `{s}`")))
}

fn format_error(path: &Path, byte: u64, message: String) -> Error {
    Error::Format {
        path: path.into(),
        message: format!("byte {byte}: {message}"),
    }
}

/// Reads one trajectory per vehicle, in order of first appearance. Positions
/// are placed at `rx_height_m`.
pub fn parse_sumo_fcd<R: BufRead>(input: R, path: &Path, rx_height_m: f64) -> Result<Vec<Trajectory>> {
    let mut reader = Reader::from_reader(input);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut order: Vec<String> = Vec::new();
    let mut samples: HashMap<String, Vec<TrajectorySample>> = HashMap::new();
    let mut time: Option<f64> = None;
    loop {
        let pos = reader.buffer_position();
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| format_error(path, pos, format!("malformed XML: {e}")))?;
        match event {
            Event::Start(e) | Event::Empty(e) => match e.name().as_ref() {
                b"timestep" => time = Some(num(&e, "time", "<timestep>", path, pos)?),
                b"vehicle" => {
                    let t = time.ok_or_else(|| format_error(path, pos, "<vehicle> outside <timestep>".into()))?;
                    let id = attr(&e, "id", &format!("<vehicle> at time {t}"), path, pos)?;
                    let ctx = format!("<vehicle id=\"{id}\"> at time {t}");
                    let x = num(&e, "x", &ctx, path, pos)?;
                    let y = num(&e, "y", &ctx, path, pos)?;
                    let speed = num(&e, "speed", &ctx, path, pos)?;
                    let angle = num(&e, "angle", &ctx, path, pos)?;
                    if speed < 0.0 {
                        return Err(format_error(path, pos, format!("{ctx}: negative speed")));
                    }
                    let list = samples.entry(id.clone()).or_insert_with(|| {
                        order.push(id.clone());
                        Vec::new()
                    });
                    if let Some(last) = list.last() {
                        if !(t > last.t_s) {
                            return Err(format_error(path, pos, format!("{ctx}: time does not increase past {}", last.t_s)));
                        }
                    }
                    list.push(TrajectorySample {
                        t_s: t,
                        position: Vec3::new(x, y, rx_height_m),
                        speed_mps: speed,
                        heading: heading_from_angle(angle),
                    });
                }
                _ => {}
            },
            Event::End(e) if e.name().as_ref() == b"timestep" => time = None,
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    order
        .into_iter()
        .map(|id| {
            let s = samples.remove(&id).expect("listed id");
            Trajectory::new(id, s)
        })
        .collect()
}

pub fn load_sumo_fcd(path: &Path, rx_height_m: f64) -> Result<Vec<Trajectory>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_sumo_fcd(std::io::BufReader::new(f), path, rx_height_m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Vec<Trajectory>> {
        parse_sumo_fcd(s.as_bytes(), Path::new("fcd.xml"), 1.5)
    }

    #[test]
    fn two_steps_one_vehicle() {
        let t = parse(
            r#"<fcd-export>
              <timestep time="0.00"><vehicle id="v0" x="1" y="2" angle="90" speed="3.5"/></timestep>
              <timestep time="1.00"><vehicle id="v0" x="4.5" y="2" angle="90" speed="3.5"/></timestep>
            </fcd-export>"#,
        )
        .unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].samples.len(), 2);
        assert_eq!(t[0].samples[1].speed_mps, 3.5);
        assert_eq!(t[0].samples[0].position, Vec3::new(1.0, 2.0, 1.5));
    }

    #[test]
    fn angle_convention() {
        let n = heading_from_angle(0.0);
        assert!(n.distance(Vec3::new(0.0, 1.0, 0.0)) < 1e-15);
        let e = heading_from_angle(90.0);
        assert!(e.distance(Vec3::new(1.0, 0.0, 0.0)) < 1e-15);
    }

    #[test]
    fn missing_attribute_names_element() {
        let e = parse(r#"<fcd-export><timestep time="0"><vehicle id="car7" x="1" y="2" angle="0"/></timestep></fcd-export>"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("car7") && e.contains("speed"), "{e}");
    }

    #[test]
    fn time_must_increase() {
        let r = parse(
            r#"<fcd-export><timestep time="1"><vehicle id="a" x="0" y="0" angle="0" speed="1"/></timestep>
               <timestep time="1"><vehicle id="a" x="0" y="1" angle="0" speed="1"/></timestep></fcd-export>"#,
        );
        assert!(r.is_err());
    }
}
