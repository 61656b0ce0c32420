mod common;

use urbanwave::geometry::Vec3;
use urbanwave::propagation::{find_reflection_paths, Transmitter};

#[test]
fn image_tree_matches_brute_force() {
    let mut total = 0;
    for seed in 0..200 {
        let (scene, txp, rx) = common::random_scene(seed, 20);
        let tx = Transmitter::new(txp, 50.0, 3e9).unwrap();
        for order in [1, 2] {
            let got = find_reflection_paths(&scene, &tx, rx, order).unwrap();
            let want = common::brute_reflections(&scene, txp, rx, order);
            let gs: Vec<_> = got.iter().map(|p| p.interactions.iter().map(|i| i.surface).collect::<Vec<_>>()).collect();
            let ws: Vec<_> = want.iter().map(|p| p.faces.clone()).collect();
            assert_eq!(gs, ws, "seed {seed} order {order}");
            for (g, w) in got.iter().zip(&want) {
                for (i, p) in g.interactions.iter().zip(&w.points) {
                    assert!(i.point.distance(*p) < 1e-6);
                }
            }
            total += got.len();
        }
    }
    assert!(total > 100, "too few paths to be meaningful: {total}");
}

#[test]
fn ground_bounce() {
    use urbanwave::geometry::{Material, Scene, SceneObject, Triangle};
    let g = 1000.0;
    let ground = SceneObject::new_static(
        0,
        "ground",
        vec![
            Triangle::new(Vec3::new(-g, -g, 0.0), Vec3::new(g, -g, 0.0), Vec3::new(g, g, 0.0), 0, 0),
            Triangle::new(Vec3::new(-g, -g, 0.0), Vec3::new(g, g, 0.0), Vec3::new(-g, g, 0.0), 0, 0),
        ],
    );
    let scene = Scene::new(vec![Material::wall()], vec![ground]).unwrap();
    let tx = Transmitter::new(Vec3::new(0.0, 0.0, 10.0), 50.0, 3e9).unwrap();
    let paths = find_reflection_paths(&scene, &tx, Vec3::new(50.0, 0.0, 2.0), 1).unwrap();
    assert_eq!(paths.len(), 1);
    let len = (50f64 * 50.0 + 12.0 * 12.0).sqrt();
    assert!((paths[0].length_m - len).abs() < 1e-9);
    assert!((len - 51.420).abs() < 1e-3);
    let fspl = 20.0 * (4.0 * std::f64::consts::PI * len / 0.1).log10();
    let want = 50.0 - fspl + 20.0 * 0.8f64.log10();
    assert!((paths[0].power_dbm - want).abs() < 1e-9);
}
