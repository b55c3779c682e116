use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eigensafe"))
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn eigenvalue(dir: &Path) -> f64 {
    fs::read_to_string(dir.join("eigenvalue.txt")).unwrap().trim().parse().unwrap()
}

/// Every artifact of a run plus its manifest without the timing line.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| {
            let name = e.file_name().into_string().unwrap();
            let mut bytes = fs::read(e.path()).unwrap();
            if name == "manifest.txt" {
                let text = String::from_utf8(bytes).unwrap();
                bytes = text.lines().filter(|l| !l.starts_with("duration_secs")).collect::<Vec<_>>().join("\n").into();
            }
            (name, bytes)
        })
        .collect();
    files.sort();
    files
}

#[test]
fn collect_with_zero_transitions_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["collect", "--env", "dint", "--n", "0"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["frobnicate"], tmp.path())), 2);
}

#[test]
fn unknown_config_key_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "n = 10\nbogus = 3\n").unwrap();
    let out = tmp.path().join("out");
    let o = bin().args(["collect", "--env", "dint", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bogus"), "{err}");
    assert_eq!(err.lines().count(), 1);
    assert!(!out.join("dataset.csv").exists());
}

#[test]
fn missing_input_path_is_rejected_before_work() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["train", "--env", "dint", "--data", "/nonexistent/data.csv"], &out);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());
}

#[test]
fn unknown_environment_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["collect", "--env", "cartpole"], tmp.path())), 3);
}

#[test]
fn toy_eigen_single_cell_and_facing_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let one = tmp.path().join("one.txt");
    fs::write(&one, ".\n\n^\n").unwrap();
    let out1 = tmp.path().join("o1");
    let o = bin().args(["toy-eigen", "--map"]).arg(&one).arg("--out").arg(&out1).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!((eigenvalue(&out1) - 0.1).abs() < 1e-12);

    let two = tmp.path().join("two.txt");
    fs::write(&two, "..\n\n><\n").unwrap();
    let out2 = tmp.path().join("o2");
    let o = bin().args(["toy-eigen", "--map"]).arg(&two).arg("--out").arg(&out2).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!((eigenvalue(&out2) - 0.7).abs() < 1e-12);
    let csv = fs::read_to_string(out2.join("eigenfunction.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("row,col,value"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn toy_eigen_default_map_prints_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["toy-eigen"], tmp.path());
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("gamma = 0.93988"), "{stdout}");
    let z = fs::read_to_string(tmp.path().join("z_curves.csv")).unwrap();
    // 23 safe cells, horizon 60, plus header.
    assert_eq!(z.lines().count(), 61 * 23 + 1);
}

#[test]
fn malformed_map_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let map = tmp.path().join("bad.txt");
    fs::write(&map, ".x\n\n>>\n").unwrap();
    let o = bin().args(["toy-eigen", "--map"]).arg(&map).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(code(&o), 3);
}

#[test]
fn cli_flag_overrides_config_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    fs::write(&cfg, "n = 50\nseed = 9\n").unwrap();
    let out = tmp.path().join("o");
    let o = bin()
        .args(["collect", "--env", "dint", "--n", "7", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let data = fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert_eq!(data.lines().count(), 8);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 3\n"));
    assert!(manifest.contains("config.n = 7\n"));
}

#[test]
fn manifest_checksums_match_artifacts() {
    use sha2::{Digest, Sha256};
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["collect", "--env", "dubins", "--n", "100"], tmp.path())), 0);
    let manifest = fs::read_to_string(tmp.path().join("manifest.txt")).unwrap();
    let line = manifest.lines().find(|l| l.starts_with("sha256.dataset.csv")).unwrap();
    let digest = hex::encode(Sha256::digest(fs::read(tmp.path().join("dataset.csv")).unwrap()));
    assert!(line.ends_with(&digest));
    assert!(manifest.lines().last().unwrap().starts_with("duration_secs"));
    let leftovers: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(".stage"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn train_and_downstream_commands_rerun_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    let cfg = p.join("train.cfg");
    fs::write(&cfg, "n_steps = 30\nbatch_size = 64\npsi_hidden = 16\nphi_steps = 20\n").unwrap();
    for round in ["a", "b"] {
        let dir = p.join(round);
        let data = dir.join("data");
        assert_eq!(code(&run(&["collect", "--env", "dint", "--n", "500", "--seed", "4"], &data)), 0);
        let model = dir.join("model");
        let o = bin()
            .args(["train", "--env", "dint", "--seed", "4", "--data"])
            .arg(data.join("dataset.csv"))
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&model)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let m = model.to_str().unwrap();
        assert_eq!(code(&run(&["eval-grid", "--env", "dint", "--model-dir", m, "--resolution", "21"], &dir.join("grid"))), 0);
        assert_eq!(code(&run(&["filter-eval", "--env", "dint", "--model-dir", m, "--episodes", "5", "--horizon", "30"], &dir.join("filter"))), 0);
    }
    // Paths differ between the two rounds, so compare everything except
    // manifest lines that record them.
    for sub in ["data", "model", "grid", "filter"] {
        let strip = |d: &Path| -> Vec<(String, Vec<u8>)> {
            snapshot(&d.join(sub))
                .into_iter()
                .map(|(n, b)| {
                    if n == "manifest.txt" {
                        let t = String::from_utf8(b).unwrap();
                        let keep: Vec<&str> = t.lines().filter(|l| !l.starts_with("config.data") && !l.starts_with("config.model_dir")).collect();
                        (n, keep.join("\n").into_bytes())
                    } else {
                        (n, b)
                    }
                })
                .collect()
        };
        assert_eq!(strip(&p.join("a")), strip(&p.join("b")), "{sub} differs");
    }
}

#[test]
fn gradcheck_passes_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["gradcheck", "--trials", "3"], tmp.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(tmp.path().join("gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn baseline_rejects_dubins() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("b.cfg");
    fs::write(&cfg, "env = dubins\n").unwrap();
    let o = bin().args(["baseline-hj", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(code(&o), 3);
}

#[test]
fn baseline_nonconvergence_exits_with_numerical_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("b.cfg");
    fs::write(&cfg, "max_iters = 3\nn_mc = 20\n").unwrap();
    let o = bin()
        .args(["baseline-hj", "--resolution", "11", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn filter_rejects_nonpositive_epsilon() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    assert_eq!(code(&run(&["collect", "--env", "dint", "--n", "50"], &data)), 0);
    let model = tmp.path().join("m");
    let cfg = tmp.path().join("t.cfg");
    fs::write(&cfg, "n_steps = 2\nbatch_size = 8\n").unwrap();
    let o = bin()
        .args(["train", "--env", "dint", "--data"])
        .arg(data.join("dataset.csv"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&model)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let o = run(&["filter-eval", "--env", "dint", "--model-dir", model.to_str().unwrap(), "--epsilon", "0"], &tmp.path().join("f"));
    assert_eq!(code(&o), 3);
    let o = run(&["filter-eval", "--env", "dubins", "--model-dir", model.to_str().unwrap()], &tmp.path().join("g"));
    assert_eq!(code(&o), 3);
}
