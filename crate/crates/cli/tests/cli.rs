use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mdust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdust")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus(dir: &Path) -> PathBuf {
    let out = dir.join("corpus");
    let o = mdust(&["gen-phantoms", "--out", s(&out), "--unlabeled", "3", "--slices", "3", "--labeled", "5", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("manifest.tsv")
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn gradcheck_passes_every_operation() {
    let o = mdust(&["gradcheck", "--rounds", "1", "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 11);
    assert!(!text.contains("FAIL"));
}

#[test]
fn stages_chain_through_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let manifest = corpus(d);
    let m = s(&manifest);
    let common = ["--model", "miniature", "--steps", "2", "--batch-size", "2", "--corpus", m];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = extra.iter().copied().chain(common).collect();
        let o = mdust(&args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        o
    };
    let (s1, s2, s3) = (d.join("s1.ckpt"), d.join("s2.ckpt"), d.join("s3.ckpt"));
    run(&["pretrain", "--checkpoint-out", s(&s1)]);
    run(&["finetune2d", "--checkpoint-in", s(&s1), "--checkpoint-out", s(&s2)]);
    run(&["finetune3d", "--checkpoint-in", s(&s2), "--checkpoint-out", s(&s3), "--report", s(&d.join("r3"))]);
    assert_eq!(files(&d.join("r3")), ["losses.csv", "summary.txt"]);

    let ev = d.join("eval");
    let o = mdust(&["evaluate", "--model", "miniature", "--corpus", m, "--checkpoint-in", s(&s3), "--split", "train", "--report", s(&ev)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(ev.join("lesions.csv")).unwrap();
    assert!(csv.starts_with("id,dsc,hd_mm,voxels_true,voxels_pred\n"));
    assert_eq!(csv.lines().count(), 1 + 3);

    let vol = std::fs::read_dir(manifest.parent().unwrap().join("test")).unwrap().next().unwrap().unwrap().path();
    let pred = d.join("pred.mdv");
    let o = mdust(&["predict", "--model", "miniature", "--checkpoint-in", s(&s3), "--input", s(&vol), "--out", s(&pred)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = mdust::data::read_volume(&pred).unwrap();
    assert_eq!(v.dims(), [32, 32, 8]);
    assert!(v.label().is_some());

    let o = mdust(&["evaluate", "--model", "miniature", "--corpus", m, "--checkpoint-in", s(&s1)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("pretrained encoder"), "{}", stderr(&o));
}

#[test]
fn failures_have_distinct_messages_and_leave_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let manifest = corpus(d);
    let m = s(&manifest);
    let ck = d.join("s3.ckpt");
    let o = mdust(&["finetune3d", "--model", "miniature", "--steps", "1", "--corpus", m, "--checkpoint-out", s(&ck)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let before = files(d);

    let unknown = mdust(&["evaluate", "--bogus", "1"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("unexpected argument '--bogus'"));

    let missing = mdust(&["evaluate", "--model", "miniature", "--corpus", s(&d.join("none.tsv")), "--checkpoint-in", s(&ck), "--report", s(&d.join("out"))]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("corpus manifest not found"), "{}", stderr(&missing));

    let mismatch = mdust(&["evaluate", "--model", "desk", "--corpus", m, "--checkpoint-in", s(&ck), "--report", s(&d.join("out"))]);
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(stderr(&mismatch).contains("fingerprint mismatch"), "{}", stderr(&mismatch));

    let no_ckpt = mdust(&["finetune2d", "--model", "miniature", "--corpus", m, "--checkpoint-in", s(&d.join("gone.ckpt")), "--checkpoint-out", s(&d.join("x.ckpt"))]);
    assert!(stderr(&no_ckpt).contains("checkpoint not found"), "{}", stderr(&no_ckpt));

    assert_eq!(files(d), before);

    let again = mdust(&["gen-phantoms", "--out", s(manifest.parent().unwrap())]);
    assert!(stderr(&again).contains("refusing to overwrite"));
}

#[test]
fn config_file_supplies_defaults_that_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let manifest = corpus(d);
    let cfg = d.join("run.cfg");
    std::fs::write(&cfg, "# desk-free run\nmodel = miniature\nsteps = 3\nbatch_size = 1\nlabeled = 9\n").unwrap();
    let report = d.join("r");
    let o = mdust(&[
        "finetune2d", "--config", s(&cfg), "--steps", "2", "--corpus", s(&manifest),
        "--checkpoint-out", s(&d.join("c.ckpt")), "--report", s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let losses = std::fs::read_to_string(report.join("losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 1 + 2);
    let summary = std::fs::read_to_string(report.join("summary.txt")).unwrap();
    assert!(summary.contains("batch_size = 1") && summary.contains("base_channels = 4"), "{summary}");

    std::fs::write(&cfg, "stepz = 3\n").unwrap();
    let o = mdust(&["pretrain", "--config", s(&cfg), "--corpus", s(&manifest), "--checkpoint-out", s(&d.join("y.ckpt"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown key `stepz`"), "{}", stderr(&o));
    assert!(!d.join("y.ckpt").exists());
}
