use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tanet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tanet")).args(args).output().expect("spawn tanet")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn synth(dir: &Path, per_kind: &str) -> Output {
    tanet(&[
        "synth", "--out-dir", s(dir), "--per-kind", per_kind, "--seed", "7", "--scenes", "6", "--size", "24",
    ])
}

#[test]
fn synth_is_deterministic_and_counts_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = synth(&a, "10");
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&synth(&b, "10")), 0);
    assert_eq!(tree(&a), tree(&b));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("train: 27 pairs (haze 9, rain 9, snow 9)"), "{stdout}");
    assert!(stdout.contains("test: 3 pairs (haze 1, rain 1, snow 1)"), "{stdout}");
}

#[test]
fn empty_clean_dir_exits_2_naming_it() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("nothing-here");
    std::fs::create_dir(&empty).unwrap();
    let out = tanet(&["synth", "--clean-dir", s(&empty), "--out-dir", s(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nothing-here"));
}

#[test]
fn bad_arguments_exit_3() {
    assert_eq!(code(&tanet(&["synth"])), 3);
    assert_eq!(code(&tanet(&["params", "--set", "bogus=1"])), 3);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.conf");
    std::fs::write(&cfg, "learning_rate = 0.1\n").unwrap();
    let out = tanet(&["params", "--config", s(&cfg)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key 'learning_rate'"));
}

#[test]
fn identity_checkpoint_restores_input_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = tmp.path().join("id.ckpt");
    let out_dir = format!("out_dir={}", s(&tmp.path().join("run")));
    let out = tanet(&["init", "--set", "base_channels=4", "--set", &out_dir, "--output", s(&ckpt)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("run/config.txt").exists());

    // 13x10 is not a multiple of 4: exercises reflection padding and crop.
    let img = tanet::weather::quantize(&tanet::weather::scene::procedural_scene(13, 10, 5));
    let input = tmp.path().join("in.ppm");
    tanet::weather::save_image(&input, &img).unwrap();
    let output = tmp.path().join("out.png");
    let out = tanet(&["restore", "--checkpoint", s(&ckpt), "--input", s(&input), "--output", s(&output)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let restored = tanet::weather::load_image(&output).unwrap();
    assert_eq!(restored.shape(), img.shape());
    assert_eq!(restored.max_abs_diff(&img), 0.0);
}

#[test]
fn corrupt_or_missing_checkpoint_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.ckpt");
    std::fs::write(&bad, b"TANTgarbage-garbage").unwrap();
    let img = tmp.path().join("x.png");
    tanet::weather::save_image(&img, &tanet::weather::scene::procedural_scene(8, 8, 0)).unwrap();
    for ckpt in [bad, tmp.path().join("missing.ckpt")] {
        let out = tanet(&["restore", "--checkpoint", s(&ckpt), "--input", s(&img), "--output", s(&img)]);
        assert_eq!(code(&out), 4);
    }
}

#[test]
fn train_then_eval_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&synth(&data, "10")), 0);
    let run = tmp.path().join("run");
    let conf = tmp.path().join("tiny.conf");
    std::fs::write(
        &conf,
        format!(
            "base_channels = 4\nsteps = 3\nbatch = 2\ncrop = 16\ncheckpoint_every = 2\ndata_dir = {}\nout_dir = {}\n",
            s(&data),
            s(&run)
        ),
    )
    .unwrap();
    let out = tanet(&["train", "--config", s(&conf)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("base_channels = 4\n"), "config is echoed first: {stdout}");
    let curve = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);
    assert!(curve.starts_with("step,loss,lr\n"));
    let echoed = std::fs::read_to_string(run.join("config.txt")).unwrap();
    assert_eq!(tanet::config::RunConfig::parse_str(&echoed).unwrap().steps, 3);

    let out = tanet(&[
        "eval",
        "--checkpoint",
        s(&run.join("model.ckpt")),
        "--manifest",
        s(&data.join("test.manifest")),
        "--time-reps",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8_lossy(&out.stdout);
    assert!(csv.starts_with("kind,psnr_restored,psnr_degraded,delta\n"), "{csv}");
    assert!(std::fs::read_to_string(run.join("eval.txt")).unwrap().contains("inference at 256x256"));
}

#[test]
fn full_scale_param_count_in_range() {
    let out = tanet(&["params", "--full-scale"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().find(|l| l.starts_with("params: ")).unwrap();
    let n: usize = line["params: ".len()..].split_whitespace().next().unwrap().parse().unwrap();
    assert!((8_100_000..=9_900_000).contains(&n), "{n}");
}
