//! Scene, material and trajectory loaders; trace, heatmap and report writers.

mod fmt;
mod materials;
mod obj;
mod output;
mod sumo;
mod trajcsv;

use std::path::Path;

pub use fmt::g6;
pub use materials::MaterialTable;
pub use obj::{parse_obj, read_obj, write_obj, write_obj_string, ObjObject};
pub use output::{
    bench_report_string, heatmap_string, parse_heatmap, parse_power_trace, power_trace_string, read_heatmap, read_power_trace,
    summary_path, write_bench_report, write_heatmap, write_json, write_power_trace, BenchReportRow, HeatmapGrid, PowerTraceRow,
    BENCH_HEADER, POWER_TRACE_HEADER,
};
pub use sumo::{heading_from_angle, load_sumo_fcd, parse_sumo_fcd};
pub use trajcsv::{load_csv_trajectories, parse_csv_trajectories, write_csv_trajectories, TRAJECTORY_HEADER};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::{Scene, SceneObject, Triangle};

/// Static scene objects from parsed OBJ objects; faces take the material of their group.
pub fn scene_objects(objects: &[ObjObject], table: &MaterialTable, first_id: u32) -> Vec<SceneObject> {
    objects
        .iter()
        .enumerate()
        .map(|(k, o)| {
            let id = first_id + k as u32;
            let mesh = o
                .faces
                .iter()
                .map(|(g, [a, b, c])| Triangle::new(*a, *b, *c, table.resolve_group(g), id))
                .collect();
            SceneObject::new_static(id, o.name.clone(), mesh)
        })
        .collect()
}

/// Loads an OBJ scene with its material sidecar. All objects are static.
pub fn load_scene(obj_path: &Path, materials_path: &Path) -> Result<Scene> {
    let table = MaterialTable::load(materials_path)?;
    let objects = read_obj(obj_path)?;
    if objects.is_empty() {
        return Err(Error::EmptyScene);
    }
    Scene::new(table.materials().to_vec(), scene_objects(&objects, &table, 0))
}

/// Loads trajectories from SUMO FCD (`.xml`) or CSV (anything else).
pub fn load_trajectories(path: &Path, rx_height_m: f64) -> Result<Vec<Trajectory>> {
    let is_xml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml"));
    if is_xml {
        load_sumo_fcd(path, rx_height_m)
    } else {
        load_csv_trajectories(path)
    }
}

/// OBJ objects for the static part of a scene, one per object, faces grouped by material name.
pub fn scene_to_obj(scene: &Scene) -> Vec<ObjObject> {
    scene
        .objects()
        .iter()
        .filter(|o| !o.is_dynamic)
        .map(|o| ObjObject {
            name: o.name.clone(),
            faces: o
                .world_triangles()
                .into_iter()
                .map(|t| (scene.material(t.material_id).name.clone(), t.vertices()))
                .collect(),
        })
        .collect()
}
