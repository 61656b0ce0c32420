use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TX: [f64; 3] = [0.0, 0.0, 10.0];

fn urbanwave(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_urbanwave"));
    cmd.args(args).env_remove("URBANWAVE_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

struct Case {
    dir: TempDir,
}

impl Case {
    fn new() -> Case {
        let c = Case {
            dir: tempfile::tempdir().unwrap(),
        };
        c.write(
            "materials.toml",
            "[materials.Absorber]\nreflection_coefficient = 0.0\n\n[groups]\nFacade = \"Wall\"\n",
        );
        c
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn write(&self, name: &str, text: &str) {
        fs::write(self.path(name), text).unwrap();
    }

    fn config(&self, name: &str, extra: &str) {
        self.write(
            name,
            &format!("# test run\ntx_position = {}, {}, {}\ntimestep_s = 0.1\n{extra}", TX[0], TX[1], TX[2]),
        );
    }

    fn run(&self, cmd: &str, config: &str, scene: &str, rest: &[&str], envs: &[(&str, &str)]) -> Output {
        let mut args = vec![
            cmd.to_string(),
            "--config".into(),
            self.arg(config),
            "--scene".into(),
            self.arg(scene),
            "--materials".into(),
            self.arg("materials.toml"),
        ];
        args.extend(rest.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        urbanwave(&refs, envs)
    }

    fn simulate(&self, config: &str, scene: &str, traj: &str, out: &str, envs: &[(&str, &str)]) -> Output {
        let (t, o) = (self.arg(traj), self.arg(out));
        self.run("simulate", config, scene, &["--trajectories", &t, "--out", &o], envs)
    }
}

/// A non-reflecting sliver far from everything, so the scene is not empty.
const SPECK: &str = "o speck\ng Absorber\nv 900 900 0\nv 901 900 0\nv 900 901 0\nf 1 2 3\n";

/// One opaque block, x 10..20, y 5..15, z 0..30.
fn block_obj() -> String {
    let mut s = String::from("o block\ng Facade\n");
    let (lo, hi) = ([10.0, 5.0, 0.0], [20.0, 15.0, 30.0]);
    for k in 0..8 {
        let x = if k & 1 == 0 { lo[0] } else { hi[0] };
        let y = if k & 2 == 0 { lo[1] } else { hi[1] };
        let z = if k & 4 == 0 { lo[2] } else { hi[2] };
        s += &format!("v {x} {y} {z}\n");
    }
    // outward-wound quads
    for q in [[1, 5, 7, 3], [2, 4, 8, 6], [1, 2, 6, 5], [3, 7, 8, 4], [1, 3, 4, 2], [5, 6, 8, 7]] {
        s += &format!("f {} {} {}\nf {} {} {}\n", q[0], q[1], q[2], q[0], q[2], q[3]);
    }
    s
}

/// Straight line at 10 m/s along +x from `x0` at height 1.5 m.
fn line_csv(id: &str, x0: f64, y: f64, duration: f64) -> String {
    let mut s = String::from("rx_id,t,x,y,z,speed,hx,hy,hz\n");
    let n = (duration as usize) * 2;
    for k in 0..=n {
        let t = k as f64 * 0.5;
        s += &format!("{id},{t},{},{y},1.5,10,1,0,0\n", x0 + 10.0 * t);
    }
    s
}

type Table = Vec<Vec<String>>;

fn table(path: &Path) -> (Vec<String>, Table) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn open_field_rows_follow_friis() {
    let c = Case::new();
    c.write("speck.obj", SPECK);
    c.config("sim.cfg", "");
    c.write("route.csv", &line_csv("rx", -30.0, 5.0, 4.0));
    let out = c.simulate("sim.cfg", "speck.obj", "route.csv", "trace.csv", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (h, rows) = table(&c.path("trace.csv"));
    assert_eq!(rows.len(), 41);
    let (t, p, los, n) = (column(&h, "t"), column(&h, "power_dbm"), column(&h, "los"), column(&h, "n_paths"));
    for r in &rows {
        let tk = num(&r[t]);
        let rx = [-30.0 + 10.0 * tk, 5.0, 1.5];
        let d = ((rx[0] - TX[0]).powi(2) + (rx[1] - TX[1]).powi(2) + (rx[2] - TX[2]).powi(2)).sqrt();
        let friis = 50.0 - 20.0 * (4.0 * std::f64::consts::PI * d * 3e9 / 3e8).log10();
        // six significant digits in the file
        assert!((num(&r[p]) - friis).abs() < 1e-3, "t = {tk}: {} vs {friis}", r[p]);
        assert_eq!(r[los], "1");
        assert_eq!(r[n], "1");
    }
    let summary = fs::read_to_string(c.path("trace.summary.json")).unwrap();
    assert!(summary.contains("\"rows\": 41"));
}

#[test]
fn cache_changes_only_cache_columns() {
    let c = Case::new();
    c.write("block.obj", &block_obj());
    c.config("on.cfg", "cache_enabled = true\n");
    c.config("off.cfg", "cache_enabled = false\n");
    c.write("route.csv", &line_csv("rx", -10.0, 20.0, 4.0));
    assert!(c.simulate("on.cfg", "block.obj", "route.csv", "on.csv", &[]).status.success());
    assert!(c.simulate("off.cfg", "block.obj", "route.csv", "off.csv", &[]).status.success());
    let (h, on) = table(&c.path("on.csv"));
    let (_, off) = table(&c.path("off.csv"));
    let hits = column(&h, "cache_hits");
    assert_eq!(on.len(), off.len());
    for (a, b) in on.iter().zip(&off) {
        for k in (0..h.len()).filter(|&k| k != hits) {
            assert_eq!(a[k], b[k], "column {}", h[k]);
        }
    }
}

#[test]
fn los_flips_where_the_block_starts_shadowing() {
    // From the TX the block covers the route y = 20 for x in [40/3, 80].
    let c = Case::new();
    c.write("block.obj", &block_obj());
    c.config("sim.cfg", "");
    c.write("route.csv", &line_csv("rx", -10.0, 20.0, 4.0));
    assert!(c.simulate("sim.cfg", "block.obj", "route.csv", "trace.csv", &[]).status.success());
    let (h, rows) = table(&c.path("trace.csv"));
    let (t, los, seg) = (column(&h, "t"), column(&h, "los"), column(&h, "segment"));
    let flip_t = (40.0 / 3.0 + 10.0) / 10.0;
    for w in rows.windows(2) {
        let (t0, t1) = (num(&w[0][t]), num(&w[1][t]));
        let expect = |tk: f64| if tk < flip_t { "1" } else { "0" };
        assert_eq!(w[0][los], expect(t0), "t = {t0}");
        if t0 < flip_t && flip_t <= t1 {
            assert_ne!(w[0][seg], w[1][seg], "no segment boundary across the shadow edge");
        }
    }
}

#[test]
fn runs_are_deterministic_across_workers() {
    let c = Case::new();
    c.write("block.obj", &block_obj());
    let mut cars = line_csv("car1", -40.0, 2.0, 4.0);
    cars += &line_csv("car2", 30.0, -3.0, 4.0).lines().skip(1).map(|l| format!("{l}\n")).collect::<String>();
    c.write("cars.csv", &cars);
    c.config("sim.cfg", "obstacles = cars.csv\nseed = 7\n");
    let mut routes = line_csv("a", -10.0, 20.0, 4.0);
    routes += &line_csv("b", -20.0, -8.0, 4.0).lines().skip(1).map(|l| format!("{l}\n")).collect::<String>();
    c.write("routes.csv", &routes);

    let run = |out: &str, workers: &str| {
        let o = c.simulate("sim.cfg", "block.obj", "routes.csv", out, &[("URBANWAVE_WORKERS", workers)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(c.path(out)).unwrap()
    };
    let first = run("a.csv", "1");
    assert_eq!(first, run("b.csv", "1"));
    assert_eq!(first, run("c.csv", "8"));
    assert!(first.len() > 1000);
}

#[test]
fn heatmap_of_an_open_field_is_symmetric() {
    let c = Case::new();
    c.write("speck.obj", SPECK);
    c.config("sim.cfg", "");
    let out = c.arg("heat.csv");
    let o = c.run("heatmap", "sim.cfg", "speck.obj", &["--time", "0", "--region=-20,-20,20,20", "--cell", "5", "--out", &out], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(c.path("heat.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# origin="));
    let grid: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(grid.len(), 8);
    for j in 0..8 {
        assert_eq!(grid[j].len(), 8);
        for i in 0..8 {
            assert_eq!(grid[j][i], grid[j][7 - i]);
            assert_eq!(grid[j][i], grid[7 - j][i]);
            assert_eq!(grid[j][i], grid[i][j]);
        }
    }
}

#[test]
fn heatmap_shadow_is_weaker_than_its_mirror() {
    let c = Case::new();
    c.write("block.obj", &block_obj());
    c.config("sim.cfg", "max_reflection_order = 1\n");
    let out = c.arg("heat.csv");
    let o = c.run("heatmap", "sim.cfg", "block.obj", &["--time", "0", "--region=-40,-40,40,40", "--cell", "10", "--out", &out], &[]);
    assert!(o.status.success());
    let text = fs::read_to_string(c.path("heat.csv")).unwrap();
    let grid: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(num).collect()).collect();
    // cell (30..40, 30..40) lies behind the block; (30..40, -40..-30) is its mirror in y
    assert!(grid[7][7] < grid[0][7] - 3.0, "{} vs {}", grid[7][7], grid[0][7]);
}

#[test]
fn bench_writes_report_and_summary() {
    use urbanwave::citygen::{city_materials, generate_city, CityParams};
    use urbanwave::geometry::Scene;

    let c = Case::new();
    let params = CityParams {
        blocks_x: 3,
        blocks_y: 3,
        ..CityParams::default()
    };
    let scene = Scene::new(city_materials(), generate_city(&params)).unwrap();
    urbanwave::io::write_obj(&urbanwave::io::scene_to_obj(&scene), &c.path("city.obj")).unwrap();
    c.config("bench.cfg", "bench_widths_m = 50, 100\nbench_placements = 2\nbench_area_objects = 5\n");
    let out = c.arg("bench.csv");
    let o = c.run("bench", "bench.cfg", "city.obj", &["--mode", "area", "--out", &out], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = table(&c.path("bench.csv"));
    assert_eq!(h.join(","), urbanwave::io::BENCH_HEADER);
    assert_eq!(rows.len(), 2);
    let w = column(&h, "wall_time_s");
    assert!(rows.iter().all(|r| num(&r[w]) > 0.0));
    let summary = fs::read_to_string(c.path("bench.summary.json")).unwrap();
    assert!(summary.contains("area_exponent"));
}

#[test]
fn bench_refuses_a_region_larger_than_the_scene() {
    let c = Case::new();
    c.write("block.obj", &block_obj());
    c.config("bench.cfg", "bench_widths_m = 400\n");
    let out = c.arg("bench.csv");
    let o = c.run("bench", "bench.cfg", "block.obj", &["--mode", "area", "--out", &out], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("smaller than"));
}

#[test]
fn bad_input_exits_with_one() {
    let c = Case::new();
    c.write("speck.obj", SPECK);
    c.config("sim.cfg", "");
    c.config("typo.cfg", "frequncy_hz = 3e9\n");
    c.write("route.csv", &line_csv("rx", 0.0, 5.0, 1.0));
    c.write("broken.obj", "v 0 0 0\nf 1 2 3\n");
    c.write("empty.obj", "# nothing\n");
    c.write("bad.csv", "id,t\nrx,0\n");

    let cases = [
        ("missing.cfg", "speck.obj", "route.csv", ""),
        ("typo.cfg", "speck.obj", "route.csv", "unknown key"),
        ("sim.cfg", "broken.obj", "route.csv", ""),
        ("sim.cfg", "empty.obj", "route.csv", "empty scene"),
        ("sim.cfg", "speck.obj", "bad.csv", "header"),
        ("sim.cfg", "speck.obj", "missing.csv", ""),
    ];
    for (cfg, scene, traj, message) in cases {
        let o = c.simulate(cfg, scene, traj, "out.csv", &[]);
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(1), "{cfg} {scene} {traj}: {err}");
        assert!(err.contains(message), "{err}");
        assert!(o.stdout.is_empty());
    }
    let o = urbanwave(&["simulate", "--config", "x"], &[]);
    assert_eq!(o.status.code(), Some(1));
    let o = urbanwave(&["heatmap", "--config", "a", "--scene", "b", "--materials", "c", "--time", "0", "--region", "1,2,3", "--out", "o"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let c = Case::new();
    c.write("speck.obj", SPECK);
    c.config("sim.cfg", "");
    c.write("route.csv", &line_csv("rx", 0.0, 5.0, 1.0));
    let o = c.simulate("sim.cfg", "speck.obj", "route.csv", "no/such/dir/out.csv", &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn workers_variable_must_be_a_count() {
    let c = Case::new();
    c.write("speck.obj", SPECK);
    c.config("sim.cfg", "");
    c.write("route.csv", &line_csv("rx", 0.0, 5.0, 1.0));
    let o = c.simulate("sim.cfg", "speck.obj", "route.csv", "out.csv", &[("URBANWAVE_WORKERS", "many")]);
    assert_eq!(o.status.code(), Some(1));
}
