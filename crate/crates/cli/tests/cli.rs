use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY_RUN: &str = r#"
name = "tiny"

[basis]
j_max = 6
m = 0

[model]
kind = "z_full"

[time]
t_final_tper = 1.0
n_steps = 256

[task]
kind = "orientation"
j_f = 2

[[guess]]
channel = "z"
peak_intensity_wcm2 = 1e12
center_tper = 0.2
fwhm_fs = 144.0

[optimizer]
method = "krotov"
lambda = 5e-2
penalty_field_unit = "V/A"
iterations = 3

[output]
stride = 8
"#;

fn rotctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotctl")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rotctl_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn thermal_target_value() {
    let o = rotctl(&["target", "thermal", "T=5", "j_f=4"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains(": 0.5188"), "{}", stdout(&o));
}

#[test]
fn orientation_target_value() {
    let o = rotctl(&["target", "orientation", "j_f=4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("9.0617"), "{text}");
    assert!(text.contains("c_4 = +0.2537"), "{text}");
}

#[test]
fn zero_field_revival() {
    let o = rotctl(&["propagate", "--preset", "orientation_krotov", "--zero-field"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("revival check: pass"), "{}", stdout(&o));
}

#[test]
fn root_scan_writes_csv() {
    let dir = scratch("roots");
    let csv = dir.join("roots.csv");
    let o = rotctl(&["scan-roots", "--out", csv.to_str().unwrap()]);
    assert!(o.status.success());
    let slopes: Vec<f64> = stdout(&o)
        .lines()
        .filter_map(|l| l.rsplit_once("= "))
        .map(|(_, v)| v.trim().parse().unwrap())
        .collect();
    assert_eq!(slopes.len(), 3);
    assert!(slopes.windows(2).all(|w| w[1] < w[0]), "{slopes:?}");
    let rows = std::fs::read_to_string(&csv).unwrap().lines().count();
    assert_eq!(rows, 1 + 3 * 201);
}

#[test]
fn unknown_key_is_reported() {
    let dir = scratch("badkey");
    let path = write_config(&dir, &TINY_RUN.replace("stride = 8", "stride = 8\nstrid = 2"));
    let o = rotctl(&["optimize", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("strid"), "{err}");
}

#[test]
fn unknown_preset_is_reported() {
    let o = rotctl(&["optimize", "--preset", "nope"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
}

#[test]
fn optimize_writes_files_deterministically() {
    let dir = scratch("optimize");
    let cfg = write_config(&dir, TINY_RUN);
    let outputs: Vec<PathBuf> = ["a", "b"]
        .iter()
        .map(|tag| {
            let out = dir.join(tag);
            let o = rotctl(&["optimize", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            out
        })
        .collect();
    for file in ["convergence.csv", "field_z.csv", "dynamics.csv", "summary.json"] {
        assert!(outputs[0].join(file).is_file(), "missing {file}");
    }
    for file in ["convergence.csv", "field_z.csv", "dynamics.csv"] {
        let a = std::fs::read(outputs[0].join(file)).unwrap();
        let b = std::fs::read(outputs[1].join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let conv = std::fs::read_to_string(outputs[0].join("convergence.csv")).unwrap();
    assert_eq!(conv.lines().count(), 1 + 4);
}

#[test]
fn presets_are_listed() {
    let o = rotctl(&["presets"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["orientation_krotov", "penalty_scan_quartic", "delocalization_krotov", "thermal_quartic"] {
        assert!(text.contains(name), "{text}");
    }
}
