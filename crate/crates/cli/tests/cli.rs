use std::path::Path;
use std::process::Command as Proc;

use wrm_cli::app::{execute, exit, run_and_write, Command};
use wrm_cli::config::{Overrides, ProbeName, Resolved};
use wrm_cli::manifest;

const BASE: &str = r#"seed = 5

[model]
d = 2
a = 1.0
lambda_plus = 1.0
lambda_minus = 1.0
t = "inf"

[windows.ambient]
shape = "cube"
half_width = 12.0

[windows.lambda]
shape = "ball"
center = [0.0, 0.0]
radius = 3.0

[windows.b]
shape = "ball"
center = [0.0, 0.0]
radius = 1.0

[sampler]
burn_in = 20
n_samples = 4
"#;

fn resolve(text: &str, out: &Path) -> Resolved {
    Resolved::from_text(text, Path::new("."), &Overrides { out: Some(out.to_path_buf()), ..Default::default() }).unwrap()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn empty_probe_list_writes_echo_and_manifest_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = resolve(BASE, &tmp.path().join("o"));
    let (art, code) = run_and_write(&Command::Run, &cfg).unwrap();
    assert!(art.files.is_empty());
    assert_eq!(code, exit::CONSISTENT);
    let mut names: Vec<String> = std::fs::read_dir(tmp.path().join("o")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["config.toml", "manifest.json"]);
}

#[test]
fn reruns_are_byte_identical() {
    let text = format!(
        "{BASE}\n[probes]\nrun = [\"spatial\"]\n\n[probes.spatial]\nn = [4.0, 6.0]\nn_samples = 2000\n"
    );
    let tmp = tempfile::tempdir().unwrap();
    for cmd in [Command::Run, Command::Sample, Command::Evolve { input: None }, Command::Render { input: None }] {
        let a = execute(&cmd, &resolve(&text, tmp.path())).unwrap();
        let b = execute(&cmd, &resolve(&text, tmp.path())).unwrap();
        assert!(!a.files.is_empty());
        assert_eq!(a, b, "{cmd:?}");
    }
    let other = text.replace("seed = 5", "seed = 6");
    assert_ne!(execute(&Command::Sample, &resolve(&text, tmp.path())).unwrap(), execute(&Command::Sample, &resolve(&other, tmp.path())).unwrap());
}

#[test]
fn probe_matches_its_run_output() {
    let text = format!("{BASE}\n[probes]\nrun = [\"spatial\"]\n\n[probes.spatial]\nn = [4.0]\nn_samples = 500\n");
    let tmp = tempfile::tempdir().unwrap();
    let cfg = resolve(&text, tmp.path());
    let alone = execute(&Command::Probe(ProbeName::Spatial), &cfg).unwrap();
    let run = execute(&Command::Run, &cfg).unwrap();
    assert_eq!(alone.files["spatial.csv"], run.files["spatial.csv"]);
}

#[test]
fn zero_intensity_percolation_is_all_zero() {
    let text = format!(
        "{BASE}\n[probes]\nrun = [\"percolation\"]\n\n[probes.percolation]\nr = 1.0\nn = [3.0, 5.0]\nburn_in = 1\nn_samples = 5\nintensity_scale = 0.0\n"
    );
    let tmp = tempfile::tempdir().unwrap();
    let (art, code) = run_and_write(&Command::Run, &resolve(&text, tmp.path())).unwrap();
    assert_eq!(code, exit::CONSISTENT);
    let csv = String::from_utf8(art.files["percolation.csv"].clone()).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let est: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(est, 0.0);
    }
}

#[test]
fn manifest_detects_edits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    run_and_write(&Command::Sample, &resolve(BASE, &out)).unwrap();
    assert!(manifest::verify(&out).unwrap().is_empty());
    let f = out.join("samples/r000_000000.txt");
    let mut text = std::fs::read_to_string(&f).unwrap();
    text.push('\n');
    std::fs::write(&f, text).unwrap();
    assert_eq!(manifest::verify(&out).unwrap(), ["samples/r000_000000.txt: content changed"]);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_wrm");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let ok = write_config(tmp.path(), BASE);
    let st = Proc::new(bin).args(["run", "--config"]).arg(&ok).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(exit::CONSISTENT));
    let st = Proc::new(bin).args(["verify", "--out"]).arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(exit::CONSISTENT));

    let bad = write_config(tmp.path(), &BASE.replace("radius = 3.0", "radius = 30.0"));
    let st = Proc::new(bin).args(["run", "--config"]).arg(&bad).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(exit::INVALID_CONFIG));
    let err = String::from_utf8(st.stderr).unwrap();
    assert!(err.contains("line 14, field `windows.lambda`"), "{err}");

    // Tiny budget near t = 0: either verdict is acceptable, never a violation or error.
    let inconclusive = format!("{BASE}\n[probes]\nrun = [\"color\"]\n\n[probes.color]\nn = [4.0]\nn_samples = 100\n")
        .replace("lambda_plus = 1.0", "lambda_plus = 4.0")
        .replace("t = \"inf\"", "t = 0.1");
    let p = write_config(tmp.path(), &inconclusive);
    let st = Proc::new(bin).args(["run", "--config"]).arg(&p).arg("--out").arg(&out).output().unwrap();
    assert!(matches!(st.status.code(), Some(exit::CONSISTENT) | Some(exit::INCONCLUSIVE)), "{st:?}");

    let no_seed = write_config(tmp.path(), &BASE.replace("seed = 5\n", ""));
    let st = Proc::new(bin).args(["sample", "--config"]).arg(&no_seed).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(exit::INVALID_CONFIG));
    let st = Proc::new(bin).args(["sample", "--seed", "9", "--config"]).arg(&no_seed).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(exit::CONSISTENT));
}

#[test]
fn render_rejects_three_dimensions() {
    let text = BASE
        .replace("d = 2", "d = 3")
        .replace("center = [0.0, 0.0]", "center = [0.0, 0.0, 0.0]");
    let tmp = tempfile::tempdir().unwrap();
    let e = execute(&Command::Render { input: None }, &resolve(&text, tmp.path())).unwrap_err();
    assert!(e.to_string().contains("rendering supports d ≤ 2"), "{e}");
}
