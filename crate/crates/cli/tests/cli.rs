use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use facepipe_core::imaging::save_pgm;
use facepipe_core::Image;

fn facepipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facepipe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn textured(seed: u64) -> Image {
    let f = seed as f64;
    Image::from_fn(24, 24, |r, c| {
        0.5 + 0.3 * ((r as f64 * (0.3 + 0.05 * f)).sin() * (c as f64 * (0.2 + 0.03 * f)).cos())
    })
    .unwrap()
}

const SMALL_CONFIG: &str = r#"{
  "n_components": 6,
  "dataset": {"n_ids": 4, "imgs_per_id": 2, "size": 16, "n_blobs": 6}
}"#;

/// Runs a small benchmark into `dir` and returns the config path.
fn small_bench(dir: &Path, seed: &str) -> PathBuf {
    let cfg = dir.join("config.json");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    let out = facepipe(&[
        "bench",
        "--seed",
        seed,
        "--config",
        s(&cfg),
        "--output",
        s(&dir.join("bench")),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    cfg
}

#[test]
fn preprocess_writes_one_file_per_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    fs::write(input.join("face.pgm"), save_pgm(&textured(1))).unwrap();
    fs::write(input.join("notes.txt"), "ignored").unwrap();

    let run = |out: &str| {
        let o = facepipe(&["preprocess", "--input", s(&input), "--output", s(&dir.path().join(out))]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("face.pgm: "));
        fs::read_dir(dir.path().join(out)).unwrap().count()
    };
    assert_eq!(run("a"), 1);
    assert_eq!(run("b"), 1);
    assert_eq!(
        fs::read(dir.path().join("a/face.pgm")).unwrap(),
        fs::read(dir.path().join("b/face.pgm")).unwrap()
    );
}

#[test]
fn preprocess_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = facepipe(&["preprocess", "--input", s(&empty), "--output", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));

    let bad = dir.path().join("bad");
    fs::create_dir(&bad).unwrap();
    fs::write(bad.join("broken.pgm"), b"P5\n4 4\n255\n\x00\x01").unwrap();
    let o = facepipe(&["preprocess", "--input", s(&bad), "--output", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("broken.pgm"), "{}", stderr(&o));

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"smoothing_sigmaa": 1}"#).unwrap();
    fs::write(empty.join("ok.pgm"), save_pgm(&textured(2))).unwrap();
    let o = facepipe(&[
        "preprocess",
        "--input",
        s(&empty),
        "--output",
        s(&dir.path().join("o")),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("smoothing_sigmaa"));
}

#[test]
fn train_writes_seven_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_bench(dir.path(), "3");
    let manifest = dir.path().join("bench/manifest_train.csv");
    let train = |out: &str| {
        let o = facepipe(&[
            "train",
            "--manifest",
            s(&manifest),
            "--config",
            s(&cfg),
            "--output",
            s(&dir.path().join(out)),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("real_imag_low: same N("));
        let mut files: Vec<_> = fs::read_dir(dir.path().join(out))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        files.sort();
        files
    };
    let files = train("m1");
    assert_eq!(files.len(), 7);
    assert!(files.contains(&"fusion.json".to_string()));
    assert!(files.contains(&"kpca_magnitude_mid.bin".to_string()));
    train("m2");
    for f in &files {
        assert_eq!(
            fs::read(dir.path().join("m1").join(f)).unwrap(),
            fs::read(dir.path().join("m2").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn train_needs_two_identities() {
    let dir = tempfile::tempdir().unwrap();
    for k in 0..2 {
        fs::write(dir.path().join(format!("{k}.pgm")), save_pgm(&textured(k))).unwrap();
    }
    let manifest = dir.path().join("m.csv");
    fs::write(&manifest, "identity_id,image_path\nalice,0.pgm\nalice,1.pgm\n").unwrap();
    let o = facepipe(&[
        "train",
        "--manifest",
        s(&manifest),
        "--output",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("need ≥ 2 identities for impostor pairs"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_bench(dir.path(), "4");
    let models = dir.path().join("models");
    let o = facepipe(&[
        "train",
        "--manifest",
        s(&dir.path().join("bench/manifest_train.csv")),
        "--config",
        s(&cfg),
        "--output",
        s(&models),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let probe = dir.path().join("bench/test/id000_00.pgm");
    let verify = |gallery: &Path, threshold: &str| {
        facepipe(&[
            "verify",
            "--models",
            s(&models),
            "--config",
            s(&cfg),
            "--probe",
            s(&probe),
            "--gallery",
            s(gallery),
            threshold,
        ])
    };

    let o = verify(&probe, "--threshold=-inf");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let scores: Vec<f64> = out
        .lines()
        .take(6)
        .map(|l| l.rsplit(' ').next().unwrap().parse().unwrap())
        .collect();
    assert!(scores.iter().all(|&v| v == 1.0), "{out}");
    assert!(out.trim_end().ends_with("ACCEPT"));

    let o = verify(&probe, "--threshold=1e300");
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).trim_end().ends_with("REJECT"));

    let impostor = dir.path().join("bench/test/id003_01.pgm");
    assert_eq!(verify(&impostor, "--threshold=-inf").status.code(), Some(0));

    assert_eq!(
        verify(&dir.path().join("missing.pgm"), "--threshold=0").status.code(),
        Some(1)
    );
    fs::remove_file(models.join("kpca_real_imag_full.bin")).unwrap();
    let o = verify(&probe, "--threshold=0");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kpca_real_imag_full.bin"));
}

#[test]
fn bench_outputs_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    let run = |out: &str| {
        let o = facepipe(&[
            "bench",
            "--seed",
            "7",
            "--config",
            s(&cfg),
            "--output",
            s(&dir.path().join(out)),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        stdout(&o)
    };
    let summary = run("a");
    assert_eq!(summary, run("b"));
    for variant in ["[pipeline]", "[raw_baseline]", "[raw_cosine]"] {
        let block = summary.split(variant).nth(1).unwrap();
        assert!(block.contains("vr@0.001: ") && block.contains("vr@0.01: ") && block.contains("auc: "));
    }
    assert!(summary.contains("seed: 7"));
    assert!(summary.contains("warning: FAR target 0.001 is unresolvable"));
    for f in [
        "summary.txt",
        "manifest_train.csv",
        "manifest_test.csv",
        "scores_pipeline.csv",
        "roc_pipeline.csv",
        "scores_raw_baseline.csv",
        "roc_raw_baseline.csv",
        "test/id003_01.pgm",
    ] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let header = fs::read_to_string(dir.path().join("a/scores_pipeline.csv")).unwrap();
    assert!(header.starts_with("pair_id,label,score_1,score_2,score_3,score_4,score_5,score_6,fused\n"));
}

#[test]
fn score_eval_reads_bench_scores() {
    let dir = tempfile::tempdir().unwrap();
    small_bench(dir.path(), "2");
    let roc = dir.path().join("roc.csv");
    let o = facepipe(&[
        "score-eval",
        "--scores",
        s(&dir.path().join("bench/scores_pipeline.csv")),
        "--roc-out",
        s(&roc),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("bench/summary.txt")).unwrap();
    let pipeline_block: String = summary
        .split("[pipeline]")
        .nth(1)
        .unwrap()
        .lines()
        .take_while(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    assert!(
        stdout(&o).contains(&pipeline_block),
        "{}\n---\n{pipeline_block}",
        stdout(&o)
    );
    assert_eq!(
        fs::read(&roc).unwrap(),
        fs::read(dir.path().join("bench/roc_pipeline.csv")).unwrap()
    );

    let o = facepipe(&[
        "score-eval",
        "--scores",
        s(&dir.path().join("bench/scores_pipeline.csv")),
        "--column",
        "nope",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_lists_defaults() {
    for sub in ["preprocess", "train", "verify", "bench", "score-eval"] {
        let o = facepipe(&[sub, "--help"]);
        assert!(o.status.success());
        let text = stdout(&o);
        if sub != "score-eval" {
            assert!(text.contains("\"smoothing_sigma\": 3.0"), "{sub}: {text}");
            assert!(text.contains("\"n_components\": 64"), "{sub}");
        }
    }
    assert!(stdout(&facepipe(&["verify", "--help"])).contains("[default: 0]"));
    assert!(stdout(&facepipe(&["bench", "--help"])).contains("[default: bench_out]"));
    assert!(stdout(&facepipe(&["score-eval", "--help"])).contains("[default: fused]"));
}
