use std::path::Path;
use std::process::{Command, Output};

use buttonsim_core::post::csv_body;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_buttonsim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

/// Small coarse scenario that finishes in seconds.
const COARSE: &str = r#"
name = "coarse"
[grid]
cell_mm = [2.0, 2.0, 1.0]
[solver]
max_steps = 1500
[band]
points = 61
"#;

#[test]
fn unknown_key_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "bad.cfg", "name = \"x\"\n[antenna]\nfeed_ofset_mm = 3\n");
    let out = run(&["validate", &f]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("feed_ofset_mm"));
}

#[test]
fn out_of_band_pattern_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.cfg", "name = \"x\"\n[outputs]\npattern_ghz = [9.0]\n");
    let out = run(&["run", &f, "--out", &dir.path().join("o").display().to_string()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn bad_sweep_path_fails_before_any_run() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "s.cfg",
        "name = \"s\"\n[sweep]\nparameter = \"antenna.no_such_field\"\nvalues = [1.0]\n",
    );
    let o = dir.path().join("sweep");
    let out = run(&["sweep", &f, "--out", &o.display().to_string()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!o.exists());
}

#[test]
fn golden_scenarios_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in ["free_space.cfg", "chest_flat.cfg", "arm_bent.cfg", "feed_sweep.cfg"] {
        let out = run(&["validate", &root.join(name).display().to_string()]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn link_subcommand_reports_range() {
    let out = run(&["link", "--wearable", "--gain-dbi", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().find(|l| l.starts_with("maximum range")).unwrap();
    let m: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(m >= 40.0, "{line}");
}

#[test]
fn design_subcommand_prints_radius() {
    let out = run(&["design", "--f-ghz", "2.45"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("23.1"));
}

#[test]
fn post_processing_failure_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // excitation far above the analysis band: spectra cannot be normalised
    let text = "name = \"off\"\n[grid]\ncell_mm = [2.0, 2.0, 1.0]\n\
                [solver]\nmax_steps = 200\nexcitation_center_ghz = 14.0\nexcitation_bandwidth_ghz = 4.0\n";
    let f = write(dir.path(), "x.cfg", text);
    let o = dir.path().join("out");
    let out = run(&["--quiet", "run", &f, "--out", &o.display().to_string()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!o.exists());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 1, "{leftovers:?}");
}

#[test]
fn coarse_run_writes_outputs_and_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{COARSE}[outputs]\npattern_ghz = [2.45]\nlink = true\n");
    let f = write(dir.path(), "c.cfg", &text);
    let mut bodies = Vec::new();
    for threads in ["1", "4"] {
        let o = dir.path().join(format!("t{threads}"));
        let out = run(&["--quiet", "--threads", threads, "run", &f, "--out", &o.display().to_string()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let files = ["s11.csv", "resonances.csv", "pattern_e_2.450GHz.csv", "pattern_h_2.450GHz.csv", "link.csv"];
        bodies.push(
            files
                .iter()
                .map(|n| csv_body(&std::fs::read_to_string(o.join(n)).unwrap()))
                .collect::<Vec<_>>(),
        );
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(o.join("run_manifest.json")).unwrap()).unwrap();
        let hash = manifest["scenario_hash"].as_str().unwrap().to_string();
        let s11 = std::fs::read_to_string(o.join("s11.csv")).unwrap();
        assert!(s11.starts_with(&format!("# scenario_hash: {hash}\n")));
        assert_eq!(s11.lines().filter(|l| !l.starts_with('#')).count(), 62);
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn coarse_chest_run_reports_sar_and_tissues() {
    let dir = tempfile::tempdir().unwrap();
    let text = "name = \"chest\"\nphantom = \"chest\"\n[grid]\ncell_mm = [2.0, 2.0, 1.0]\nbody_depth_mm = 16.0\n\
                [solver]\nmax_steps = 1500\n[band]\npoints = 61\n[outputs]\nsar = true\nsar_ghz = 2.45\n";
    let f = write(dir.path(), "c.cfg", text);
    let o = dir.path().join("out");
    let out = run(&["--quiet", "run", &f, "--out", &o.display().to_string()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s11 = std::fs::read_to_string(o.join("s11.csv")).unwrap();
    assert!(s11.contains("# tissues 1.00-4.00 GHz (at 2.45 GHz): skin eps_r 38"), "{s11}");
    assert!(s11.contains("(at 5.60 GHz)") && s11.contains("muscle eps_r 48.2 sigma 6"));
    let sar = std::fs::read_to_string(o.join("sar.csv")).unwrap();
    let body = csv_body(&sar);
    let rows: Vec<&str> = body.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{sar}");
    assert!(rows[0].starts_with("1g 1.6 W/kg,") && rows[1].starts_with("10g 2.0 W/kg,"), "{sar}");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(o.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 2);
    let p1 = manifest["sar"]["peak_1g"].as_f64().unwrap();
    let p10 = manifest["sar"]["peak_10g"].as_f64().unwrap();
    assert!(p1 > 0.0 && p1 >= p10);
}

#[test]
fn default_log_reports_estimate_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "c.cfg", COARSE);
    let o = dir.path().join("out");
    let out = bin()
        .env_remove("RUST_LOG")
        .args(["run", &f, "--out", &o.display().to_string()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let log = String::from_utf8_lossy(&out.stderr);
    let line = log.lines().find(|l| l.contains("MB, at most")).unwrap_or_else(|| panic!("{log}"));
    assert!(line.contains("cells") && line.contains("up to ~"), "{line}");
}
