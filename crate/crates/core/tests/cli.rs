use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvecongeal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn synth(dir: &Path, family: &str) -> Output {
    run(&[
        "synth",
        "--family",
        family,
        "--difficulty",
        "3",
        "--copies",
        "8",
        "--seed",
        "5",
        "--seed-curve",
        "builtin:skewpeak",
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["align", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["align", "--bogus"])), 1);
    assert_eq!(
        code(&run(&[
            "synth",
            "--family",
            "warp",
            "--difficulty",
            "9",
            "--out",
            "/tmp/x"
        ])),
        1
    );
}

#[test]
fn unsupervised_with_amplitude_transforms_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.ucr");
    fs::write(&input, "1,0,1,2,3\n1,0,1,2,4\n2,3,2,1,0\n2,3,2,1,1\n").unwrap();
    let out = run(&[
        "classify",
        "--input",
        input.to_str().unwrap(),
        "--mode",
        "unsupervised",
        "--transforms",
        "warp,scale",
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("protocol violation"));
}

#[test]
fn malformed_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.ucr");
    fs::write(&input, "1,0,1,2,3\n1,0,1,2\n").unwrap();
    let out = run(&[
        "align",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn synth_then_recover_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&synth(dir.path(), "offset")), 0);
    for f in [
        "dataset.csv",
        "ground_truth.csv",
        "seed.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let out = run(&[
        "recover",
        "--dataset",
        dir.path().to_str().unwrap(),
        "--max-iters",
        "60",
    ]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let value = |prefix: &str| -> f64 {
        stdout
            .lines()
            .find_map(|l| l.strip_prefix(prefix))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    let before = value("recovery_error before:");
    let after = value("recovery_error after:");
    assert!(after < before, "{stdout}");
}

#[test]
fn timestamps_are_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&synth(dir.path(), "scale")), 0);
    let plain = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(!plain.contains("started_at"));

    let dir2 = tempfile::tempdir().unwrap();
    let out = run(&[
        "--timestamps",
        "synth",
        "--family",
        "scale",
        "--difficulty",
        "2",
        "--out",
        dir2.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let stamped = fs::read_to_string(dir2.path().join("manifest.json")).unwrap();
    assert!(stamped.contains("started_at_unix"));
}

#[test]
fn classify_cv_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.csv");
    let mut text = String::from("label,a,b,c,d,e\n");
    for i in 0..6 {
        let e = i as f64 * 0.01;
        text.push_str(&format!("0,{e},1,2,1,0\n1,2,{e},0,1,2\n"));
    }
    fs::write(&input, text).unwrap();
    let out_dir = dir.path().join("res");
    let out = run(&[
        "classify",
        "--input",
        input.to_str().unwrap(),
        "--format",
        "csv",
        "--mode",
        "none",
        "--folds",
        "3",
        "--k",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let results: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("results.json")).unwrap()).unwrap();
    assert_eq!(results["baseline"]["accuracy"], 1.0);
}

#[test]
fn repeated_synth_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let args = [
        "synth",
        "--family",
        "offset",
        "--difficulty",
        "1",
        "--copies",
        "5",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ];
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        assert_eq!(code(&run(&args)), 0);
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        fs::remove_dir_all(&out).unwrap();
        snapshots.push(files);
    }
    assert_eq!(snapshots[0].len(), 4);
    assert_eq!(snapshots[0], snapshots[1]);
}
