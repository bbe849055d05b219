use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gesture(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gesture")).args(args).output().expect("spawn gesture")
}

fn ok(args: &[&str]) -> String {
    let out = gesture(args);
    assert!(
        out.status.success(),
        "gesture {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fails(args: &[&str]) -> String {
    let out = gesture(args);
    assert!(!out.status.success(), "gesture {args:?} unexpectedly succeeded");
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    let line = err.lines().find(|l| l.starts_with("error[")).unwrap_or_else(|| panic!("no error line in {err}"));
    line.to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Self { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

const TINY_MODEL: &[&str] = &[
    "--hidden-size", "8", "--num-layers", "1", "--disc-hidden-size", "4", "--disc-num-layers", "1",
    "--embedding-dim", "8", "--batch-size", "16",
];

#[test]
fn full_pipeline() {
    let f = Fixture::new();
    let (clips, prep, prep2) = (f.p("clips"), f.p("prep"), f.p("prep2"));
    ok(&["make-corpus", "--out", s(&clips), "--clips", "20", "--speakers", "4", "--seed", "3"]);
    let out = ok(&["preprocess", "--corpus", s(&clips), "--out", s(&prep), "--seed", "1"]);
    assert!(out.contains("windows kept"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(prep.join("ingestion_report.json")).unwrap()).unwrap();
    assert!(report["windows_total"].as_u64().unwrap() > 0);
    ok(&["preprocess", "--corpus", s(&clips), "--out", s(&prep2), "--seed", "1"]);
    assert_eq!(fs::read(prep.join("corpus.gpc")).unwrap(), fs::read(prep2.join("corpus.gpc")).unwrap());
    assert!(prep.join("preprocess.manifest.json").is_file());
    assert!(!prep.join(".gesture.lock").exists());

    let corpus = prep.join("corpus.gpc");
    let ex_dir = f.p("ex");
    ok(&[
        "train-extractor", "--corpus", s(&corpus), "--out", s(&ex_dir), "--epochs", "2", "--channels", "8",
        "--latent-dim", "4", "--min-sequences", "10",
    ]);
    let extractor = ex_dir.join("extractor.gfx");

    let run = f.p("run");
    let mut args = vec!["train", "--corpus", s(&corpus), "--out", s(&run), "--epochs", "3", "--warmup-epochs", "1"];
    args.extend_from_slice(TINY_MODEL);
    args.extend_from_slice(&["--extractor", s(&extractor), "--val-max-windows", "8"]);
    ok(&args);
    for e in 1..=3 {
        assert!(run.join(format!("epoch_{e:03}.ckpt")).is_file());
    }
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,huber,nsgan_g,style,kld,total_g,total_d,fgd_val,warmup"));
    assert_eq!(history.lines().count(), 4);
    let warm: Vec<&str> = history.lines().skip(1).map(|l| l.split(',').nth(8).unwrap()).collect();
    assert_eq!(warm, ["true", "false", "false"]);
    let ckpt = run.join("best.ckpt");

    // a six-second utterance
    let short = f.p("short");
    ok(&["make-corpus", "--out", s(&short), "--clips", "1", "--seconds", "6", "--seed", "5"]);
    let clip = fs::read_dir(&short).unwrap().map(|e| e.unwrap().path()).find(|p| p.is_dir()).unwrap();
    let (words, audio) = (clip.join("words.json"), clip.join("audio.wav"));
    let zero = "0,0,0,0,0,0,0,0";
    for (i, name) in ["syn_a", "syn_b"].iter().enumerate() {
        let out = f.p(name);
        let msg = ok(&[
            "synthesize", "--checkpoint", s(&ckpt), "--words", s(&words), "--audio", s(&audio), "--out", s(&out),
            "--style-vector", zero, "--format", "json",
        ]);
        assert!(msg.starts_with("90 frames"), "{msg}");
        if i == 1 {
            assert_eq!(
                fs::read(f.p("syn_a").join("animation.json")).unwrap(),
                fs::read(out.join("animation.json")).unwrap()
            );
        }
    }
    let anim: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.p("syn_a").join("animation.json")).unwrap()).unwrap();
    assert_eq!(anim["frames"].as_array().unwrap().len(), 90);
    ok(&[
        "synthesize", "--checkpoint", s(&ckpt), "--words", s(&words), "--audio", s(&audio), "--out",
        s(&f.p("syn_bvh")), "--speaker-id", "1",
    ]);
    assert!(fs::read_to_string(f.p("syn_bvh").join("animation.bvh")).unwrap().starts_with("HIERARCHY"));

    let ev = f.p("eval");
    ok(&["evaluate", "--checkpoint", s(&ckpt), "--extractor", s(&extractor), "--corpus", s(&corpus), "--out", s(&ev)]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("metrics.json")).unwrap()).unwrap();
    assert!(m["fgd"].as_f64().unwrap() >= 0.0);
    assert!(m["n_real"].as_u64().unwrap() > 0);
    assert_eq!(m["extractor_id"].as_str().unwrap().len(), 64);

    let nb = f.p("noise");
    let grid = f.p("grid.json");
    fs::write(&grid, r#"{"gaussian": [0.0, 0.001, 0.01], "salt_pepper": [0.0, 0.1]}"#).unwrap();
    ok(&[
        "noise-bench", "--extractor", s(&extractor), "--corpus", s(&corpus), "--out", s(&nb), "--part", "train",
        "--grid", s(&grid),
    ]);
    let csv = fs::read_to_string(nb.join("noise_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);

    let sm = f.p("style");
    ok(&["style-map", "--checkpoint", s(&ckpt), "--words", s(&words), "--audio", s(&audio), "--out", s(&sm)]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(sm.join("style_map.json")).unwrap()).unwrap();
    assert_eq!(r["rows"].as_array().unwrap().len(), 4);

    let subs = f.p("subs.txt");
    fs::write(&subs, "").unwrap();
    let ta = f.p("alter");
    ok(&[
        "text-alter", "--checkpoint", s(&ckpt), "--extractor", s(&extractor), "--corpus", s(&corpus),
        "--substitutions", s(&subs), "--out", s(&ta),
    ]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(ta.join("text_alter.json")).unwrap()).unwrap();
    assert_eq!(r["n_pairs"], 0);
    assert!(r["fgd"].is_null());

    // replaying a manifest reproduces the output
    let replay = f.p("eval_replay");
    ok(&["evaluate", "--config", s(&ev.join("evaluate.manifest.json")), "--out", s(&replay)]);
    assert_eq!(fs::read(ev.join("metrics.json")).unwrap(), fs::read(replay.join("metrics.json")).unwrap());

    // error paths that need a checkpoint
    let both = fails(&[
        "synthesize", "--checkpoint", s(&ckpt), "--words", s(&words), "--audio", s(&audio), "--out",
        s(&f.p("x")), "--speaker-id", "0", "--style-vector", zero,
    ]);
    assert!(both.contains("exactly one"), "{both}");
    let neither = fails(&[
        "synthesize", "--checkpoint", s(&ckpt), "--words", s(&words), "--audio", s(&audio), "--out", s(&f.p("x")),
    ]);
    assert!(neither.contains("exactly one"), "{neither}");
    let range = fails(&[
        "synthesize", "--checkpoint", s(&ckpt), "--words", s(&words), "--audio", s(&audio), "--out", s(&f.p("x")),
        "--speaker-id", "99",
    ]);
    assert!(range.starts_with("error[speaker_out_of_range]"), "{range}");

    // a transcript that ends long before the audio triggers a warning
    let early = f.p("early.json");
    fs::write(&early, r#"[{"text": "hello", "start": 0.1, "end": 0.5}]"#).unwrap();
    let out = gesture(&[
        "synthesize", "--checkpoint", s(&ckpt), "--words", s(&early), "--audio", s(&audio), "--out",
        s(&f.p("syn_warn")), "--speaker-id", "0",
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("audio lasts"));
}

#[test]
fn errors_are_single_classified_lines() {
    let f = Fixture::new();
    let empty = f.p("empty");
    fs::create_dir_all(&empty).unwrap();
    let e = fails(&["preprocess", "--corpus", s(&empty), "--out", s(&f.p("o"))]);
    assert!(e.starts_with("error[corpus]") && e.contains("words.json"), "{e}");

    let missing = f.p("nope.ckpt");
    let e = fails(&[
        "synthesize", "--checkpoint", s(&missing), "--words", "w.json", "--audio", "a.wav", "--out", s(&f.p("o")),
        "--speaker-id", "0",
    ]);
    assert!(e.contains(s(&missing)), "{e}");

    let e = fails(&["preprocess", "--out", s(&f.p("o"))]);
    assert!(e.starts_with("error[usage]") && e.contains("--corpus"), "{e}");

    let locked = f.p("locked");
    fs::create_dir_all(&locked).unwrap();
    fs::write(locked.join(".gesture.lock"), "1").unwrap();
    let e = fails(&["make-corpus", "--out", s(&locked), "--clips", "1"]);
    assert!(e.starts_with("error[locked]"), "{e}");
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let f = Fixture::new();
    let clips = f.p("clips");
    ok(&["make-corpus", "--out", s(&clips), "--clips", "4", "--seconds", "6"]);
    let conf = f.p("prep.conf");
    fs::write(&conf, format!("corpus = {}\nseed = 11\nsplit = 0.5,0.25,0.25\n", s(&clips))).unwrap();
    let (a, b) = (f.p("a"), f.p("b"));
    ok(&["preprocess", "--config", s(&conf), "--out", s(&a)]);
    ok(&["preprocess", "--config", s(&conf), "--out", s(&b), "--seed", "12"]);
    let manifest = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(d.join("preprocess.manifest.json")).unwrap()).unwrap()
    };
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config"]["seed"], 11);
    assert_eq!(mb["config"]["seed"], 12);
    assert_eq!(ma["config"]["split"], "0.5,0.25,0.25");
    assert_eq!(ma["config"]["min_motion_variance"], 1e-4);
    assert!(ma["outputs"][0]["sha256"].as_str().is_some());

    fs::write(&conf, "colour = blue\n").unwrap();
    let e = fails(&["preprocess", "--config", s(&conf), "--out", s(&a)]);
    assert!(e.contains("colour"), "{e}");
}
