//! Wavefront OBJ triangle soup. Objects start at `o` lines; in files without
//! any `o` line every `g` line starts a new object. The active `g` name
//! selects the material of the faces that follow.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Faces of one OBJ object, grouped by material group name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjObject {
    pub name: String,
    /// `(group, triangle vertices)` in file order.
    pub faces: Vec<(String, [Vec3; 3])>,
}

/// Directives that carry no geometry we use.
const IGNORED: &[&str] = &["vn", "vt", "vp", "s", "mtllib", "usemtl", "l", "p"];

pub fn parse_obj(text: &str, path: &Path) -> Result<Vec<ObjObject>> {
    let has_objects = text.lines().any(|l| l.trim_start().starts_with("o ") || l.trim() == "o");
    let mut verts: Vec<Vec3> = Vec::new();
    let mut objects: Vec<ObjObject> = Vec::new();
    let mut group = String::from("default");
    let mut current: Option<ObjObject> = None;

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it.next().expect("non-empty line");
        match key {
            "v" => {
                let nums: Vec<f64> = it
                    .map(|s| s.parse::<f64>().map_err(|_| Error::parse(path, line_no, format!("bad number `{s}`"))))
                    .collect::<Result<_>>()?;
                if !(3..=4).contains(&nums.len()) || nums.iter().any(|v| !v.is_finite()) {
                    return Err(Error::parse(path, line_no, "vertex needs 3 finite coordinates"));
                }
                verts.push(Vec3::new(nums[0], nums[1], nums[2]));
            }
            "f" => {
                let idx: Vec<usize> = it.map(|s| vertex_index(s, verts.len(), path, line_no)).collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::parse(path, line_no, "face needs at least 3 vertices"));
                }
                let obj = current.get_or_insert_with(|| ObjObject {
                    name: group.clone(),
                    faces: Vec::new(),
                });
                for k in 1..idx.len() - 1 {
                    obj.faces.push((group.clone(), [verts[idx[0]], verts[idx[k]], verts[idx[k + 1]]]));
                }
            }
            "g" => {
                group = it.collect::<Vec<_>>().join(" ");
                if group.is_empty() {
                    group = "default".into();
                }
                if !has_objects {
                    objects.extend(current.take().filter(|o| !o.faces.is_empty()));
                    current = Some(ObjObject {
                        name: group.clone(),
                        faces: Vec::new(),
                    });
                }
            }
            "o" => {
                objects.extend(current.take().filter(|o| !o.faces.is_empty()));
                let name = it.collect::<Vec<_>>().join(" ");
                current = Some(ObjObject {
                    name: if name.is_empty() { format!("object{}", objects.len()) } else { name },
                    faces: Vec::new(),
                });
            }
            k if IGNORED.contains(&k) => {}
            other => return Err(Error::parse(path, line_no, format!("unknown directive `{other}`"))),
        }
    }
    objects.extend(current.take().filter(|o| !o.faces.is_empty()));
    Ok(objects)
}

fn vertex_index(token: &str, count: usize, path: &Path, line: usize) -> Result<usize> {
    let head = token.split('/').next().unwrap_or("");
    let i: i64 = head.parse().map_err(|_| Error::parse(path, line, format!("bad vertex index `{token}`")))?;
    let resolved = if i > 0 { i - 1 } else { count as i64 + i };
    if i == 0 || resolved < 0 || resolved >= count as i64 {
        return Err(Error::parse(path, line, format!("vertex index {i} out of range (have {count})")));
    }
    Ok(resolved as usize)
}

pub fn read_obj(path: &Path) -> Result<Vec<ObjObject>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

/// Serializes objects with one `o` block each and shared-free vertex lists.
pub fn write_obj_string(objects: &[ObjObject]) -> String {
    let mut s = String::new();
    let mut next = 1usize;
    for o in objects {
        let _ = writeln!(s, "o {}", o.name);
        let mut group: Option<&str> = None;
        for (g, tri) in &o.faces {
            if group != Some(g.as_str()) {
                let _ = writeln!(s, "g {g}");
                group = Some(g);
            }
            for v in tri {
                let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
            }
            let _ = writeln!(s, "f {} {} {}", next, next + 1, next + 2);
            next += 3;
        }
    }
    s
}

pub fn write_obj(objects: &[ObjObject], path: &Path) -> Result<()> {
    std::fs::write(path, write_obj_string(objects)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("t.obj")
    }

    #[test]
    fn quad_is_fanned() {
        let objs = parse_obj("g Wall\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n", p()).unwrap();
        assert_eq!(objs.len(), 1);
        assert_eq!(objs[0].faces.len(), 2);
        assert_eq!(objs[0].faces[0].0, "Wall");
    }

    #[test]
    fn slash_and_negative_indices() {
        let objs = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf -3/1/1 -2//1 -1\n", p()).unwrap();
        assert_eq!(objs[0].faces[0].1[2], Vec3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_obj("v 0 0 0\nbogus 1\n", p()).unwrap_err().to_string();
        assert!(e.contains(":2:"), "{e}");
        let e = parse_obj("v 0 0 0\nf 1 2 3\n", p()).unwrap_err().to_string();
        assert!(e.contains(":2:") && e.contains("out of range"), "{e}");
        assert!(parse_obj("v 0 0\n", p()).is_err());
    }

    #[test]
    fn objects_split_on_o() {
        let text = "o a\ng Wall\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\no b\ng Metal\nf 1 2 3\n";
        let objs = parse_obj(text, p()).unwrap();
        assert_eq!(objs.len(), 2);
        assert_eq!(objs[1].name, "b");
        assert_eq!(objs[1].faces[0].0, "Metal");
        let again = parse_obj(&write_obj_string(&objs), p()).unwrap();
        assert_eq!(again, objs);
    }
}
