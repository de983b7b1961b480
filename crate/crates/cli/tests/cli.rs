use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use speccomp::frontend::{stft_magnitude, write_wav_i16, FrameSpec, Waveform};
use speccomp::io::{read_state, FeatureFile};

fn speccomp(args: &[&str]) -> Output {
    speccomp_env(args, None)
}

fn speccomp_env(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_speccomp"));
    cmd.args(args).env_remove("SPECCOMP_SEED");
    if let Some(s) = seed {
        cmd.env("SPECCOMP_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[track_caller]
fn expect_code(out: &Output, want: i32) {
    assert_eq!(
        code(out),
        want,
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tone(freq: f64, seconds: f64, rate: u32) -> Waveform {
    let n = (seconds * rate as f64) as usize;
    let samples = (0..n)
        .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / rate as f64).sin() + 0.01 * ((i * 7919) % 13) as f64 / 13.0)
        .collect();
    Waveform::new(samples, rate).unwrap()
}

fn wav(dir: &Path, name: &str, wave: &Waveform) -> PathBuf {
    let path = dir.join(name);
    write_wav_i16(&path, wave).unwrap();
    path
}

/// A run small enough to train in well under a second.
const TINY_CONFIG: &str = r#"
seed = 11

[corpus]
n_speakers = 3
utts_per_speaker = 3
duration_s = 0.3

[heldout]
n_speakers = 3
utts_per_speaker = 2

[train]
learning_rate = 0.01
epochs = 4
batch_size = 4
embedding_dim = 8
"#;

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, TINY_CONFIG).unwrap();
    path
}

fn train(dir: &Path, out: &Path, extra: &[&str], seed_env: Option<&str>) -> Output {
    let cfg = tiny_config(dir);
    let mut args = vec!["train", "--config", s(&cfg), "--out-dir", s(out)];
    args.extend_from_slice(extra);
    speccomp_env(&args, seed_env)
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

// ---------------------------------------------------------------- general

#[test]
fn help_and_version_succeed() {
    for args in [&["--help"][..], &["--version"], &["train", "--help"]] {
        let out = speccomp(args);
        expect_code(&out, 0);
        assert!(!stdout(&out).is_empty());
    }
}

#[test]
fn usage_errors_are_validation_failures() {
    expect_code(&speccomp(&[]), 1);
    expect_code(&speccomp(&["frobnicate"]), 1);
    expect_code(&speccomp(&["init", "--preset", "cube-root"]), 1);
    expect_code(&speccomp(&["init", "--preset", "sqrt", "--out", "x"]), 1);
}

// ---------------------------------------------------------------- extract

#[test]
fn extract_writes_raw_stft_features() {
    let tmp = TempDir::new().unwrap();
    let wave = tone(1000.0, 1.0, 16_000);
    let input = wav(tmp.path(), "a.wav", &wave);
    let out_dir = tmp.path().join("feats");
    let out = speccomp(&["extract", s(&input), "--out-dir", s(&out_dir)]);
    expect_code(&out, 0);

    let ff = FeatureFile::read(out_dir.join("a.feat")).unwrap();
    assert!(!ff.compressed);
    assert_eq!((ff.n_frames(), ff.n_channels()), (98, 257));
    assert_eq!(ff.sample_rate, 16_000);

    // Same magnitudes as the library on the quantized waveform.
    let loaded = speccomp::frontend::load_wav(&input).unwrap();
    let want = stft_magnitude(&loaded, &FrameSpec::default()).unwrap();
    for (a, b) in ff.values.iter().zip(want.values()) {
        assert_eq!(*a, *b as f32);
    }

    // Reading and re-encoding gives the same bytes.
    let bytes = fs::read(out_dir.join("a.feat")).unwrap();
    assert_eq!(FeatureFile::decode(&bytes).unwrap().encode(), bytes);
}

#[test]
fn extract_compresses_with_a_state() {
    let tmp = TempDir::new().unwrap();
    let input = wav(tmp.path(), "b.wav", &tone(440.0, 0.5, 16_000));
    for preset in ["log", "cube-root"] {
        let state = tmp.path().join(format!("{preset}.scst"));
        expect_code(&speccomp(&["init", "--preset", preset, "--out", s(&state)]), 0);
        let dir = tmp.path().join(preset);
        expect_code(&speccomp(&["extract", s(&input), "-o", s(&dir), "--state", s(&state)]), 0);
    }
    let log = FeatureFile::read(tmp.path().join("log/b.feat")).unwrap();
    let cube = FeatureFile::read(tmp.path().join("cube-root/b.feat")).unwrap();
    assert!(log.compressed && cube.compressed);
    // ln x = 3 ln(x^(1/3)) wherever the magnitude is above the floor.
    let mut compared = 0;
    for (l, c) in log.values.iter().zip(&cube.values) {
        if *c > 1e-3 {
            let want = 3.0 * (*c as f64).ln();
            assert!((*l as f64 - want).abs() <= 1e-5 * want.abs().max(1.0), "{l} vs {want}");
            compared += 1;
        }
    }
    assert!(compared > 1000);
}

#[test]
fn extract_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let good = wav(tmp.path(), "good.wav", &tone(300.0, 0.2, 16_000));
    let wrong_rate = wav(tmp.path(), "rate.wav", &tone(300.0, 0.2, 8_000));
    let short = wav(tmp.path(), "short.wav", &tone(300.0, 0.01, 16_000));
    let garbage = tmp.path().join("garbage.wav");
    fs::write(&garbage, b"not a wave file").unwrap();
    let out_dir = tmp.path().join("out");

    for bad in [&wrong_rate, &short, &garbage, &tmp.path().join("missing.wav")] {
        let out = speccomp(&["extract", s(bad), "--out-dir", s(&out_dir)]);
        expect_code(&out, 1);
        assert!(stderr(&out).contains(bad.file_name().unwrap().to_str().unwrap()));
    }
    // A bad file does not stop the good ones.
    let out = speccomp(&["extract", s(&good), s(&wrong_rate), "--out-dir", s(&out_dir)]);
    expect_code(&out, 1);
    assert!(out_dir.join("good.feat").exists());

    // The output directory cannot be created.
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"").unwrap();
    expect_code(&speccomp(&["extract", s(&good), "--out-dir", s(&blocker.join("sub"))]), 2);

    // Bad frame geometry.
    expect_code(&speccomp(&["extract", s(&good), "-o", s(&out_dir), "--hop", "500"]), 1);

    // State with the wrong channel count.
    let state = tmp.path().join("s.scst");
    expect_code(&speccomp(&["init", "--preset", "cube-root", "--channels", "10", "--out", s(&state)]), 0);
    expect_code(&speccomp(&["extract", s(&good), "-o", s(&out_dir), "--state", s(&state)]), 1);
}

// ---------------------------------------------------------------- init / dump-params

#[test]
fn init_and_dump_cube_root() {
    let tmp = TempDir::new().unwrap();
    let state = tmp.path().join("cube.scst");
    expect_code(&speccomp(&["init", "--preset", "cube-root", "--out", s(&state)]), 0);
    let out = speccomp(&["dump-params", s(&state)]);
    expect_code(&out, 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 258);
    assert_eq!(lines[0], "channel,alpha_0");
    for (i, line) in lines[1..].iter().enumerate() {
        assert_eq!(*line, format!("{i},3"));
    }

    let csv = tmp.path().join("cube.csv");
    expect_code(&speccomp(&["dump-params", s(&state), "--out", s(&csv)]), 0);
    assert_eq!(fs::read_to_string(&csv).unwrap(), text);
}

#[test]
fn init_multi_regime_drc() {
    let tmp = TempDir::new().unwrap();
    let state = tmp.path().join("drc.scst");
    expect_code(&speccomp(&["init", "--preset", "drc", "--mode", "mr-cd", "--out", s(&state)]), 0);
    let text = stdout(&speccomp(&["dump-params", s(&state)]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("channel,delta_0,delta_1,delta_2,r_0,r_1,r_2"));
    assert_eq!(lines.next(), Some("0,1,1.5,2,0,0.5,1"));
    assert_eq!(lines.count(), 256);

    // Custom ranges and regime counts.
    let custom = tmp.path().join("custom.scst");
    let out = speccomp(&[
        "init", "--preset", "cube-root", "--mode", "mr-cd", "--regimes", "5", "--range", "alpha=2:6", "--out",
        s(&custom),
    ]);
    expect_code(&out, 0);
    let st = read_state(&custom).unwrap();
    let firsts: Vec<f64> = st.regimes().iter().map(|r| r[0].at(0)).collect();
    assert_eq!(firsts, [2.0, 3.0, 4.0, 5.0, 6.0]);
}

#[test]
fn init_offset_log_seed_precedence() {
    let tmp = TempDir::new().unwrap();
    let run = |name: &str, flag: Option<&str>, env: Option<&str>| {
        let path = tmp.path().join(name);
        let mut args = vec!["init", "--preset", "offset-log", "--out", s(&path)];
        if let Some(f) = flag {
            args.extend(["--seed", f]);
        }
        expect_code(&speccomp_env(&args, env), 0);
        fs::read(&path).unwrap()
    };
    let env5 = run("a", None, Some("5"));
    assert_eq!(env5, run("b", Some("5"), None));
    assert_ne!(env5, run("c", None, Some("6")));
    assert_eq!(run("d", Some("5"), Some("6")), env5);
    // A malformed seed variable is a validation error.
    let out = speccomp_env(&["init", "--preset", "offset-log", "--out", s(&tmp.path().join("e"))], Some("abc"));
    expect_code(&out, 1);
}

#[test]
fn init_and_dump_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = |name: &str| tmp.path().join(name);
    // alpha is not a DRC parameter.
    expect_code(&speccomp(&["init", "--preset", "drc", "--range", "alpha=1:2", "--mode", "mr-cd", "--out", s(&out("a"))]), 1);
    // Ranges only make sense with several regimes.
    expect_code(&speccomp(&["init", "--preset", "drc", "--range", "r=0:1", "--out", s(&out("b"))]), 1);
    expect_code(&speccomp(&["init", "--preset", "power-law", "--value", "alpha=-1", "--out", s(&out("c"))]), 1);
    expect_code(&speccomp(&["init", "--preset", "power-law", "--channels", "0", "--out", s(&out("d"))]), 1);
    expect_code(&speccomp(&["init", "--preset", "drc", "--mode", "mr-cd", "--regimes", "1", "--out", s(&out("e"))]), 1);

    let corrupt = out("corrupt.scst");
    fs::write(&corrupt, b"SCST garbage").unwrap();
    expect_code(&speccomp(&["dump-params", s(&corrupt)]), 1);
    expect_code(&speccomp(&["dump-params", s(&out("missing.scst"))]), 1);

    let state = out("ok.scst");
    expect_code(&speccomp(&["init", "--preset", "cube-root", "--out", s(&state)]), 0);
    let blocker = out("file");
    fs::write(&blocker, b"").unwrap();
    expect_code(&speccomp(&["dump-params", s(&state), "--out", s(&blocker.join("x.csv"))]), 2);
    expect_code(&speccomp(&["init", "--preset", "cube-root", "--out", s(&blocker.join("x"))]), 2);
}

// ---------------------------------------------------------------- gradcheck

#[test]
fn gradcheck_passes_and_catches_wrong_signs() {
    let tmp = TempDir::new().unwrap();
    let json = tmp.path().join("g.json");
    let out = speccomp(&["gradcheck", "--kind", "power", "--mode", "cd", "--seed", "7", "--json", s(&json)]);
    expect_code(&out, 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["seed"], 7);

    let out = speccomp(&["gradcheck", "--kind", "drc", "--mode", "mr-cd", "--seed", "7", "--inject-wrong-sign"]);
    expect_code(&out, 2);

    // Every kind in every mode.
    expect_code(&speccomp(&["gradcheck", "--points", "200"]), 0);
    expect_code(&speccomp(&["gradcheck", "--tolerance", "-1"]), 1);
}

// ---------------------------------------------------------------- train

#[test]
fn train_writes_artifacts_with_config_echo() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    let out = train(tmp.path(), &run, &[], None);
    expect_code(&out, 0);
    assert!(stdout(&out).contains("held-out EER"));
    for f in ["report.json", "head.json", "state_initial.scst", "state_final.scst", "params_final.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let r = report(&run);
    assert_eq!(r["config"]["seed"], 11);
    assert_eq!(r["config"]["train"]["epochs"], 4);
    assert_eq!(r["config"]["corpus"]["n_speakers"], 3);
    assert_eq!(r["loss_history"].as_array().unwrap().len(), 4);
    assert_eq!(r["param_trajectory"].as_array().unwrap().len(), 5);
    let head: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("head.json")).unwrap()).unwrap();
    assert_eq!(head["config"], r["config"]);

    let loss: Vec<f64> = r["loss_history"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(loss.last().unwrap() < &loss[0], "{loss:?}");

    let csv = fs::read_to_string(run.join("params_final.csv")).unwrap();
    assert_eq!(csv.lines().count(), 258);
    assert_eq!(read_state(run.join("state_final.scst")).unwrap().n_channels(), 257);
}

#[test]
fn train_with_zero_learning_rate_keeps_the_state() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    expect_code(&train(tmp.path(), &run, &["--learning-rate", "0"], None), 0);
    assert_eq!(
        fs::read(run.join("state_initial.scst")).unwrap(),
        fs::read(run.join("state_final.scst")).unwrap()
    );
}

#[test]
fn train_is_reproducible_and_seeded() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    let once = |extra: &[&str], env: Option<&str>| {
        expect_code(&train(tmp.path(), &run, extra, env), 0);
        fs::read(run.join("report.json")).unwrap()
    };
    let first = once(&[], None);
    assert_eq!(first, once(&[], None));

    let env = once(&[], Some("99"));
    assert_ne!(env, first);
    assert_eq!(report(&run)["config"]["seed"], 99);
    // The flag wins over the environment.
    assert_eq!(once(&["--seed", "11"], Some("99")), first);
}

#[test]
fn train_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    expect_code(&train(tmp.path(), &run, &["--epochs", "0"], None), 1);
    expect_code(&train(tmp.path(), &run, &["--speakers", "1"], None), 1);
    expect_code(&train(tmp.path(), &run, &["--learning-rate", "-1"], None), 1);

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[train]\nlearnign_rate = 0.1\n").unwrap();
    expect_code(&speccomp(&["train", "--config", s(&bad), "--out-dir", s(&run)]), 1);
    fs::write(&bad, "[train\n").unwrap();
    expect_code(&speccomp(&["train", "--config", s(&bad), "--out-dir", s(&run)]), 1);
    expect_code(&speccomp(&["train", "--config", s(&tmp.path().join("none.toml"))]), 1);

    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"").unwrap();
    expect_code(&train(tmp.path(), &blocker.join("run"), &[], None), 2);
}

// ---------------------------------------------------------------- evaluate

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn evaluate_embeddings_table_and_json() {
    let tmp = TempDir::new().unwrap();
    let emb = write(tmp.path(), "emb.txt", "a1 1 0\na2 0.9 0.1\nb1 0 1\nb2 0.2 0.9\nc1 -1 0\n");
    let l1 = write(tmp.path(), "l1.txt", "1 a1 a2\n0 a1 b1\n1 b1 b2\n0 a2 b2\n");
    let l2 = write(tmp.path(), "l2.txt", "1 a1 a2\n0 a1 c1\n0 b1 c1\n");
    let json = tmp.path().join("eval.json");
    let out = speccomp(&[
        "evaluate", "--embeddings", s(&emb), "--trials", s(&l1), "--trials", s(&l2), "--json", s(&json),
    ]);
    expect_code(&out, 0);
    let table = stdout(&out);
    assert!(table.contains("EER(%)") && table.contains("minDCF") && table.contains("pooled"), "{table}");

    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["lists"].as_array().unwrap().len(), 2);
    assert_eq!(v["config"]["eval"]["p_tar"], 0.01);
    assert_eq!(v["lists"][0]["report"]["eer"], 0.0);
    assert_eq!(v["pooled"]["n_target"], 3);
    assert_eq!(v["pooled"]["n_nontarget"], 4);

    // One list: no pooled row.
    let out = speccomp(&["evaluate", "--embeddings", s(&emb), "--trials", s(&l1)]);
    expect_code(&out, 0);
    assert!(!stdout(&out).contains("pooled"));
}

#[test]
fn evaluate_lists_missing_ids() {
    let tmp = TempDir::new().unwrap();
    let emb = write(tmp.path(), "emb.txt", "a 1 0\nb 0 1\n");
    let trials = write(tmp.path(), "t.txt", "1 a zz\n0 a b\n0 yy b\n");
    let out = speccomp(&["evaluate", "--embeddings", s(&emb), "--trials", s(&trials)]);
    expect_code(&out, 1);
    let err = stderr(&out);
    assert!(err.contains("2 trial id(s)") && err.contains("yy") && err.contains("zz"), "{err}");
}

#[test]
fn evaluate_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let emb = write(tmp.path(), "emb.txt", "a 1 0\nb 0 1\nc 1 1\n");
    let ok = write(tmp.path(), "ok.txt", "1 a c\n0 a b\n");
    let no_target = write(tmp.path(), "nt.txt", "0 a b\n");
    let bad_label = write(tmp.path(), "bl.txt", "2 a b\n");
    let bad_emb = write(tmp.path(), "be.txt", "a 1 0\nb 0\n");
    let ev = |args: &[&str]| {
        let mut v = vec!["evaluate"];
        v.extend_from_slice(args);
        speccomp(&v)
    };
    expect_code(&ev(&["--embeddings", s(&emb), "--trials", s(&no_target)]), 1);
    expect_code(&ev(&["--embeddings", s(&emb), "--trials", s(&bad_label)]), 1);
    expect_code(&ev(&["--embeddings", s(&bad_emb), "--trials", s(&ok)]), 1);
    expect_code(&ev(&["--embeddings", s(&emb), "--trials", s(&ok), "--p-tar", "1.5"]), 1);
    expect_code(&ev(&["--trials", s(&ok)]), 1);
    expect_code(&ev(&["--embeddings", s(&emb), "--trials", s(&ok), "--head", "h.json"]), 1);
    let blocker = write(tmp.path(), "file", "");
    expect_code(&ev(&["--embeddings", s(&emb), "--trials", s(&ok), "--json", s(&blocker.join("x"))]), 2);
}

#[test]
fn extract_train_evaluate_pipeline() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    expect_code(&train(tmp.path(), &run, &[], None), 0);

    // Two "speakers" by pitch, two utterances each.
    let wav_dir = tmp.path().join("wav");
    fs::create_dir(&wav_dir).unwrap();
    let mut inputs = Vec::new();
    for (name, f) in [("lo1", 200.0), ("lo2", 205.0), ("hi1", 2500.0), ("hi2", 2520.0)] {
        inputs.push(wav(&wav_dir, &format!("{name}.wav"), &tone(f, 0.5, 16_000)));
    }
    let raw = tmp.path().join("raw");
    let compressed = tmp.path().join("compressed");
    let state = run.join("state_final.scst");
    let mut args = vec!["extract", "--out-dir"];
    args.push(s(&raw));
    args.extend(inputs.iter().map(|p| s(p)));
    expect_code(&speccomp(&args), 0);
    args[2] = s(&compressed);
    args.extend(["--state", s(&state)]);
    expect_code(&speccomp(&args), 0);

    let trials = write(tmp.path(), "t.txt", "1 lo1 lo2\n1 hi1 hi2\n0 lo1 hi1\n0 lo2 hi2\n0 lo1 hi2\n");
    let head = run.join("head.json");
    let json_a = tmp.path().join("a.json");
    let json_b = tmp.path().join("b.json");
    let emb = tmp.path().join("emb.txt");
    let out = speccomp(&[
        "evaluate", "--trials", s(&trials), "--features-dir", s(&compressed), "--head", s(&head), "--json",
        s(&json_a), "--write-embeddings", s(&emb),
    ]);
    expect_code(&out, 0);
    // Raw features compressed on the fly score identically.
    let out = speccomp(&[
        "evaluate", "--trials", s(&trials), "--features-dir", s(&raw), "--head", s(&head), "--state", s(&state),
        "--json", s(&json_b),
    ]);
    expect_code(&out, 0);
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json_a).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json_b).unwrap()).unwrap();
    let eer = |v: &serde_json::Value| v["pooled"]["eer"].as_f64().unwrap();
    // Stored features are f32, so the two routes agree closely but not bitwise.
    assert!((eer(&a) - eer(&b)).abs() < 1e-9, "{} vs {}", eer(&a), eer(&b));
    assert_eq!(fs::read_to_string(&emb).unwrap().lines().count(), 4);

    // Embeddings written by one run score the same as the features route.
    let json_c = tmp.path().join("c.json");
    expect_code(&speccomp(&["evaluate", "--trials", s(&trials), "--embeddings", s(&emb), "--json", s(&json_c)]), 0);
    let c: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json_c).unwrap()).unwrap();
    assert_eq!(eer(&c), eer(&a));

    // Raw features without a state, and compressed ones with a state, are rejected.
    expect_code(&speccomp(&["evaluate", "--trials", s(&trials), "--features-dir", s(&raw), "--head", s(&head)]), 1);
    expect_code(
        &speccomp(&[
            "evaluate", "--trials", s(&trials), "--features-dir", s(&compressed), "--head", s(&head), "--state",
            s(&state),
        ]),
        1,
    );
}
