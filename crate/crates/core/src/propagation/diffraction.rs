use crate::geometry::{Scene, SceneObject, SurfaceRef, Vec3};

use super::{Interaction, InteractionKind, PropagationPath, Transmitter};

/// Single knife-edge loss in dB for Fresnel parameter `nu`:
/// `6.9 + 20·log10(√((ν−0.1)²+1) + ν − 0.1)` above ν = −0.7, zero below.
pub fn knife_edge_loss_db(nu: f64) -> f64 {
    if nu <= -0.7 {
        return 0.0;
    }
    let x = nu - 0.1;
    6.9 + 20.0 * ((x * x + 1.0).sqrt() + x).log10()
}

/// Fresnel–Kirchhoff parameter `h·√(2(d1+d2)/(λ·d1·d2))` for an edge at
/// height `h` above the direct ray, `d1`/`d2` from each terminal.
pub fn fresnel_parameter(h: f64, d1: f64, d2: f64, wavelength: f64) -> f64 {
    h * (2.0 * (d1 + d2) / (wavelength * d1 * d2)).sqrt()
}

/// Point on segment `a`–`b` minimizing `|p − x| + |p − y|`, as the segment
/// parameter in `[0, 1]` before clamping. `None` if the segment is degenerate
/// or both points lie on its supporting line.
pub(crate) fn shortest_detour_param(a: Vec3, b: Vec3, x: Vec3, y: Vec3) -> Option<f64> {
    let axis = b - a;
    let len = axis.length();
    if len <= 0.0 {
        return None;
    }
    let e = axis / len;
    let along_x = (x - a).dot(e);
    let along_y = (y - a).dot(e);
    let rx = ((x - a) - e * along_x).length();
    let ry = ((y - a) - e * along_y).length();
    if rx + ry <= 0.0 {
        return None;
    }
    // Unfolding both points into one half-plane turns the detour into a straight line.
    let along = along_x + (along_y - along_x) * rx / (rx + ry);
    Some(along / len)
}

fn distance_to_line(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let d = b - a;
    (p - a).cross(d).length() / d.length()
}

/// Whether an edge separates faces lit and unlit from `source`. Boundary
/// edges always count.
fn is_silhouette(obj: &SceneObject, faces: (u32, Option<u32>), point: Vec3, source: Vec3) -> bool {
    let Some(f2) = faces.1 else {
        return true;
    };
    let side = |f: u32| obj.mesh[f as usize].normal_raw().dot(source - point) > 0.0;
    side(faces.0) != side(f2)
}

/// First-order diffraction around silhouette edges of the objects blocking
/// the direct ray. Each edge contributes at most one path, through the edge
/// point that minimizes total length; endpoints (vertex diffraction) are not
/// modeled. Returns an empty list when the direct ray is clear.
pub(crate) fn diffraction_paths(scene: &Scene, tx: &Transmitter, rx: Vec3, rays: &mut u64) -> Vec<PropagationPath> {
    let mut out = Vec::new();
    let src = tx.position;
    *rays += 1;
    let blockers = scene.blockers(src, rx);
    for id in blockers {
        let Some(obj) = scene.object(id) else { continue };
        for (ei, edge) in obj.edges().iter().enumerate() {
            let a = edge.a + obj.pose;
            let b = edge.b + obj.pose;
            if !is_silhouette(obj, edge.faces, a, src) {
                continue;
            }
            let Some(u) = shortest_detour_param(a, b, src, rx) else { continue };
            if !(u > 1e-9 && u < 1.0 - 1e-9) {
                continue;
            }
            let p = a + (b - a) * u;
            *rays += 1;
            if scene.occluded(src, p) {
                continue;
            }
            *rays += 1;
            if scene.occluded(p, rx) {
                continue;
            }
            let d1 = src.distance(p);
            let d2 = p.distance(rx);
            let h = distance_to_line(p, src, rx);
            // The direct ray is blocked, so the edge obstructs it: ν > 0.
            let nu = fresnel_parameter(h, d1, d2, tx.wavelength());
            let loss = knife_edge_loss_db(nu);
            let interaction = Interaction {
                kind: InteractionKind::Diffraction,
                surface: SurfaceRef::new(id, ei as u32),
                point: p,
            };
            out.push(PropagationPath::from_points(tx, rx, vec![interaction], -loss));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grazing_edge_loses_six_db() {
        let want = 6.9 + 20.0 * (1.01f64.sqrt() - 0.1).log10();
        assert!((knife_edge_loss_db(0.0) - want).abs() < 1e-12);
        assert!((knife_edge_loss_db(0.0) - 6.0328).abs() < 1e-4);
    }

    #[test]
    fn branch_boundary_is_zero() {
        assert_eq!(knife_edge_loss_db(-0.7), 0.0);
        assert_eq!(knife_edge_loss_db(-3.0), 0.0);
        // the closed form is about 0.54 dB at the cutoff, so the loss jumps there
        let x: f64 = -0.6999 - 0.1;
        let want = 6.9 + 20.0 * ((x * x + 1.0).sqrt() + x).log10();
        assert!((knife_edge_loss_db(-0.6999) - want).abs() < 1e-12);
        assert!((want - 0.5368).abs() < 1e-3);
    }

    #[test]
    fn deep_shadow_loss() {
        let want = 6.9 + 20.0 * ((1.9f64 * 1.9 + 1.0).sqrt() + 1.9).log10();
        assert!((knife_edge_loss_db(2.0) - want).abs() < 1e-12);
        assert!((knife_edge_loss_db(2.0) - 19.0428).abs() < 1e-4);
    }

    #[test]
    fn loss_is_monotone_in_nu() {
        let mut prev = knife_edge_loss_db(-0.69);
        for i in 1..400 {
            let nu = -0.69 + i as f64 * 0.01;
            let l = knife_edge_loss_db(nu);
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn detour_point_matches_dense_search() {
        let a = Vec3::new(0.0, -10.0, 5.0);
        let b = Vec3::new(0.0, 10.0, 5.0);
        let x = Vec3::new(-20.0, -3.0, 1.0);
        let y = Vec3::new(15.0, 6.0, 2.0);
        let u = shortest_detour_param(a, b, x, y).unwrap();
        let cost = |u: f64| {
            let p = a + (b - a) * u;
            p.distance(x) + p.distance(y)
        };
        let best = (0..=100_000).map(|i| i as f64 / 100_000.0).min_by(|p, q| cost(*p).total_cmp(&cost(*q))).unwrap();
        assert!((u - best).abs() < 2e-5);
    }
}
