//! Material sidecar (TOML):
//!
//! ```toml
//! [materials.Glass]
//! reflection_coefficient = 0.5
//!
//! [groups]
//! Facade = "Glass"
//! ```
//!
//! `Wall` and `Metal` are always present with their default properties unless
//! redefined. A group whose name is a material uses it directly; unmapped
//! groups fall back to `Wall` with a warning.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::Material;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialSpec {
    reflection_coefficient: f64,
    thickness_mm: Option<f64>,
    penetration_loss_db: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    #[serde(default)]
    materials: BTreeMap<String, MaterialSpec>,
    #[serde(default)]
    groups: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaterialTable {
    materials: Vec<Material>,
    groups: BTreeMap<String, String>,
}

impl Default for MaterialTable {
    fn default() -> Self {
        MaterialTable {
            materials: vec![Material::wall(), Material::metal()],
            groups: BTreeMap::new(),
        }
    }
}

impl MaterialTable {
    pub fn parse(text: &str, path: &Path) -> Result<MaterialTable> {
        let sidecar: Sidecar = toml::from_str(text).map_err(|e| Error::Format {
            path: path.into(),
            message: e.to_string(),
        })?;
        let mut table = MaterialTable::default();
        for (name, spec) in sidecar.materials {
            let m = Material {
                name: name.clone(),
                reflection_coefficient: spec.reflection_coefficient,
                thickness_mm: spec.thickness_mm,
                penetration_loss_db: spec.penetration_loss_db,
            };
            m.validate()?;
            match table.materials.iter_mut().find(|x| x.name == name) {
                Some(slot) => *slot = m,
                None => table.materials.push(m),
            }
        }
        for target in sidecar.groups.values() {
            if table.id(target).is_none() {
                return Err(Error::UnknownMaterial(target.clone()));
            }
        }
        table.groups = sidecar.groups;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<MaterialTable> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MaterialTable::parse(&text, path)
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.materials.iter().position(|m| m.name == name).map(|i| i as u32)
    }

    /// Material id for an OBJ group name.
    pub fn resolve_group(&self, group: &str) -> u32 {
        if let Some(target) = self.groups.get(group) {
            return self.id(target).expect("group targets are validated on load");
        }
        if let Some(id) = self.id(group) {
            return id;
        }
        log::warn!("group `{group}` has no material mapping; using Wall");
        self.id("Wall").expect("Wall is always present")
    }

    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        for m in &self.materials {
            s.push_str(&format!("[materials.{}]\nreflection_coefficient = {:?}\n", m.name, m.reflection_coefficient));
            if let Some(t) = m.thickness_mm {
                s.push_str(&format!("thickness_mm = {t:?}\n"));
            }
            if let Some(l) = m.penetration_loss_db {
                s.push_str(&format!("penetration_loss_db = {l:?}\n"));
            }
            s.push('\n');
        }
        if !self.groups.is_empty() {
            s.push_str("[groups]\n");
            for (g, m) in &self.groups {
                s.push_str(&format!("{g:?} = {m:?}\n"));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("m.toml")
    }

    #[test]
    fn defaults_present() {
        let t = MaterialTable::parse("", p()).unwrap();
        let wall = &t.materials()[t.id("Wall").unwrap() as usize];
        assert_eq!(wall.reflection_coefficient, 0.8);
        let metal = &t.materials()[t.id("Metal").unwrap() as usize];
        assert_eq!((metal.reflection_coefficient, metal.thickness_mm, metal.penetration_loss_db), (0.9, Some(10.0), Some(10.0)));
    }

    #[test]
    fn groups_and_fallback() {
        let t = MaterialTable::parse("[materials.Glass]\nreflection_coefficient = 0.5\n[groups]\nFacade = \"Glass\"\n", p()).unwrap();
        assert_eq!(t.resolve_group("Facade"), t.id("Glass").unwrap());
        assert_eq!(t.resolve_group("Metal"), t.id("Metal").unwrap());
        assert_eq!(t.resolve_group("Unknown"), t.id("Wall").unwrap());
        assert_eq!(MaterialTable::parse(&t.to_toml(), p()).unwrap(), t);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            MaterialTable::parse("[groups]\nA = \"Nope\"\n", p()),
            Err(Error::UnknownMaterial(_))
        ));
        assert!(MaterialTable::parse("[materials.X]\nreflection_coefficient = 1.5\n", p()).is_err());
        assert!(MaterialTable::parse("[materials.X]\nreflection = 0.5\n", p()).is_err());
    }
}
