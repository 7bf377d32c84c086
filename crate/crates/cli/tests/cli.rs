use std::path::Path;
use std::process::{Command, Output};

fn mmlpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmlpc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_works_for_every_subcommand() {
    assert_eq!(mmlpc(&["--help"]).status.code(), Some(0));
    for sub in ["synth", "bench", "flops", "fb-check", "attn-demo", "gen-weights", "gen-features"] {
        let o = mmlpc(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(mmlpc(&[]).status.code(), Some(2));
    assert_eq!(mmlpc(&["synth"]).status.code(), Some(2));
    assert_eq!(mmlpc(&["attn-demo", "--mechanism", "bahdanau"]).status.code(), Some(2));
    assert_eq!(mmlpc(&["flops", "--q", "0"]).status.code(), Some(2));
    assert_eq!(mmlpc(&["fb-check", "--taps", "60"]).status.code(), Some(2));
}

#[test]
fn missing_and_truncated_weights_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let feats = dir.path().join("f.f32feat");
    let out = dir.path().join("o.wav");
    assert!(mmlpc(&["gen-features", "--frames", "2", "--out", path(&feats)]).status.success());

    let missing = dir.path().join("nope.mmlp");
    let o = mmlpc(&["synth", "--weights", path(&missing), "--features", path(&feats), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let w = dir.path().join("w.mmlp");
    assert!(mmlpc(&["gen-weights", "--out", path(&w)]).status.success());
    let bytes = std::fs::read(&w).unwrap();
    let cut = dir.path().join("cut.mmlp");
    std::fs::write(&cut, &bytes[..bytes.len() / 3]).unwrap();
    let o = mmlpc(&["synth", "--weights", path(&cut), "--features", path(&feats), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("MMLP"), "stderr: {}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn synth_writes_a_wav_of_the_right_size_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let feats = dir.path().join("f.f32feat");
    assert!(mmlpc(&["gen-features", "--frames", "10", "--seed", "3", "--out", path(&feats)]).status.success());
    for mode in ["mmt", "baseline"] {
        let w = dir.path().join(format!("{mode}.mmlp"));
        let out = dir.path().join(format!("{mode}.wav"));
        assert!(mmlpc(&["gen-weights", "--mode", mode, "--out", path(&w)]).status.success());
        let o = mmlpc(&["synth", "--weights", path(&w), "--features", path(&feats), "--out", path(&out)]);
        assert!(o.status.success(), "{mode}: {}", stderr(&o));
        assert_eq!(std::fs::metadata(&out).unwrap().len(), 44 + 2 * 1600);
    }
}

#[test]
fn bench_reports_speedup_and_audio_length() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.mmlp");
    assert!(mmlpc(&["gen-weights", "--out", path(&w)]).status.success());
    let o = mmlpc(&["bench", "--weights", path(&w), "--frames", "100", "--mode", "both"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("speedup:"));

    let o = mmlpc(&["bench", "--weights", path(&w), "--frames", "100", "--mode", "mmt", "--kv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let secs: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("mmt.audio_seconds:"))
        .expect("audio_seconds key")
        .trim()
        .parse()
        .unwrap();
    assert_eq!(secs, 1.0);
}

#[test]
fn flops_and_fb_check_succeed_with_defaults() {
    let o = mmlpc(&["flops", "--kv"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().count() >= 2);
    let o = mmlpc(&["fb-check", "--signal", "sine"]);
    assert!(o.status.success(), "{}", stderr(&o));
}
