//! Acceptance suite. Runs every criterion in order, prints one
//! `PASS`/`FAIL` line per criterion and fails if any criterion failed.
//!
//! The desk-scale runs (criteria 6, 7 and their rerun in 9) dominate the
//! runtime: about ten 2,000-step trainings on one CPU core.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tanet::checkpoint;
use tanet::loss::{charbonnier, fft_loss, psnr, LossConfig};
use tanet::nn::{param_count_for, Components, NetworkConfig, ParamStore, TaBlock, TaNet, Variant};
use tanet::tensor::kernels::{conv2d, strip_pool_h, strip_pool_v};
use tanet::tensor::{fft2d, Graph, Shape, Tensor};
use tanet::train::{
    cosine_lr, evaluate, gradcheck, run_ablation, train, AblationSettings, AblationTable, GradCheckOptions,
    TrainOptions, TrainState,
};
use tanet::weather::{
    apply, build_dataset, load_pairs, quantize, scene, BuiltDataset, DegradationSpec, Pair, WeatherKind,
};

/// Held-out mean PSNR gain of the desk Net5 run (criterion 6), in dB.
const PINNED_DESK_GAIN_DB: f64 = 4.388;
/// Allowed drift from the pinned number across machines (SIMD kernels
/// differ in rounding).
const PINNED_TOLERANCE_DB: f64 = 0.5;

/// Desk budget shared by criteria 6, 7 and 9.
const DESK_STEPS: usize = 2000;
const DESK_BATCH: usize = 4;
const DESK_CROP: usize = 64;
const DESK_SCENES: usize = 100;
const DESK_PER_KIND: usize = 100;
const DESK_SCENE_SIDE: usize = 96;
/// Width used at desk scale; see README for why it is below the default.
const DESK_BASE_CHANNELS: usize = 8;
/// Scene, dataset and overfit seed.
const SEED: u64 = 7;
/// Weight init and batch sampling seed for the desk runs.
const TRAIN_SEED: u64 = 0;

struct Outcome {
    id: u8,
    name: &'static str,
    passed: bool,
    detail: String,
}

/// Writes past the test harness's output capture so the per-criterion lines
/// show up in a plain `cargo test` log too.
fn say(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn report(outcomes: &mut Vec<Outcome>, id: u8, name: &'static str, passed: bool, detail: String) {
    say(&format!("[{}] {id}. {name}: {detail}", if passed { "PASS" } else { "FAIL" }));
    outcomes.push(Outcome {
        id,
        name,
        passed,
        detail,
    });
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

// ---- criterion 1 ----

fn gradient_correctness() -> (bool, String) {
    let start = Instant::now();
    let opts = GradCheckOptions::default();
    let reports = gradcheck::standard_suite(&opts).expect("gradient suite runs");
    let elapsed = start.elapsed();
    let mut failed = Vec::new();
    let mut worst = 0.0f64;
    for r in &reports {
        worst = worst.max(r.max_rel_error());
        if !r.passed() {
            say(&r.to_text());
            failed.push(r.label.clone());
        }
    }
    let ok = failed.is_empty() && opts.tolerance <= 1e-4 && opts.h == 1e-5 && within(elapsed, 120);
    (
        ok,
        format!(
            "{} checks, max rel error {worst:.2e}, failed {:?}, {:.1}s (limit 120s)",
            reports.len(),
            failed,
            elapsed.as_secs_f64()
        ),
    )
}

// ---- criterion 2: naive oracles written independently of the library ----

fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: (usize, usize)) -> Tensor<f64> {
    let xs = x.shape();
    let [kh, kw, cin, cout] = w.shape().dims();
    let oh = (xs.height + 2 * pad.0 - kh) / stride + 1;
    let ow = (xs.width + 2 * pad.1 - kw) / stride + 1;
    Tensor::from_fn(Shape::new(xs.batch, oh, ow, cout), |n, i, j, co| {
        let mut acc = b.at(0, 0, 0, co);
        for ki in 0..kh {
            for kj in 0..kw {
                let yi = (i * stride + ki) as isize - pad.0 as isize;
                let xj = (j * stride + kj) as isize - pad.1 as isize;
                if yi < 0 || xj < 0 || yi >= xs.height as isize || xj >= xs.width as isize {
                    continue;
                }
                for ci in 0..cin {
                    acc += x.at(n, yi as usize, xj as usize, ci) * w.at(ki, kj, ci, co);
                }
            }
        }
        acc
    })
}

fn naive_dft(x: &Tensor<f64>) -> (Vec<f64>, Vec<f64>) {
    let s = x.shape();
    let (mut re, mut im) = (vec![0.0; s.numel()], vec![0.0; s.numel()]);
    for b in 0..s.batch {
        for c in 0..s.channels {
            for u in 0..s.height {
                for v in 0..s.width {
                    let (mut sr, mut si) = (0.0, 0.0);
                    for m in 0..s.height {
                        for n in 0..s.width {
                            let angle =
                                -2.0 * PI * ((u * m) as f64 / s.height as f64 + (v * n) as f64 / s.width as f64);
                            let val = x.at(b, m, n, c);
                            sr += val * angle.cos();
                            si += val * angle.sin();
                        }
                    }
                    let k = s.index(b, u, v, c);
                    re[k] = sr;
                    im[k] = si;
                }
            }
        }
    }
    (re, im)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn kernel_oracles() -> (bool, String) {
    let start = Instant::now();
    let (mut conv_err, mut strip_err, mut fft_err) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape::new(
            rng.gen_range(1..=2),
            rng.gen_range(1..=8),
            rng.gen_range(1..=8),
            rng.gen_range(1..=4),
        );
        let x = random_tensor(&mut rng, shape);

        let stride = rng.gen_range(1..=2);
        let pad = (rng.gen_range(0..=1), rng.gen_range(0..=1));
        let kh = rng.gen_range(1..=3).min(shape.height + 2 * pad.0);
        let kw = rng.gen_range(1..=3).min(shape.width + 2 * pad.1);
        let cout = rng.gen_range(1..=4);
        let w = random_tensor(&mut rng, Shape::new(kh, kw, shape.channels, cout));
        let b = random_tensor(&mut rng, Shape::new(1, 1, 1, cout));
        let got = conv2d(&x, &w, &b, stride, pad).expect("valid geometry");
        let want = naive_conv(&x, &w, &b, stride, pad);
        assert_eq!(got.shape(), want.shape());
        conv_err = conv_err.max(max_diff(got.data(), want.data()));

        let h = strip_pool_h(&x);
        let v = strip_pool_v(&x);
        let want_h = Tensor::from_fn(Shape::new(shape.batch, 1, shape.width, shape.channels), |n, _, j, c| {
            (0..shape.height).map(|i| x.at(n, i, j, c)).sum::<f64>() / shape.height as f64
        });
        let want_v = Tensor::from_fn(Shape::new(shape.batch, shape.height, 1, shape.channels), |n, i, _, c| {
            (0..shape.width).map(|j| x.at(n, i, j, c)).sum::<f64>() / shape.width as f64
        });
        strip_err = strip_err.max(max_diff(h.data(), want_h.data())).max(max_diff(v.data(), want_v.data()));

        let grid = fft2d(&x);
        let (re, im) = naive_dft(&x);
        fft_err = fft_err.max(max_diff(grid.re(), &re)).max(max_diff(grid.im(), &im));
    }
    let elapsed = start.elapsed();
    let ok = conv_err <= 1e-10 && strip_err <= 1e-10 && fft_err <= 1e-10 && within(elapsed, 60);
    (
        ok,
        format!(
            "100 seeds each, max abs error conv {conv_err:.1e}, strip {strip_err:.1e}, fft {fft_err:.1e}, {:.2}s (limit 60s)",
            elapsed.as_secs_f64()
        ),
    )
}

// ---- criterion 3 ----

fn closed_form_fixtures() -> (bool, String) {
    let mut store = ParamStore::<f64>::new(1);
    let block = TaBlock::new(&mut store, "tab", 4, Components::ALL).expect("block");
    for id in store.ids().collect::<Vec<_>>() {
        if !store.name(id).ends_with("gamma") {
            let s = store.shape(id);
            store.set(id, Tensor::zeros(s)).expect("same shape");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = random_tensor(&mut rng, Shape::new(2, 5, 6, 4));
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let fv = g.constant(f.clone());
    let y = block.forward(&mut g, &p, fv).expect("forward");
    let tab_ok = g.value(y) == &f.map(|v| 2.0 * v);

    let o = random_tensor(&mut rng, Shape::new(1, 6, 5, 3));
    let char_ok = charbonnier(&o, &o, 1e-3).unwrap() == 1e-3;
    let fft_ok = fft_loss(&o, &o).unwrap() == 0.0;
    let lr_ok = cosine_lr(0, DESK_STEPS, 1e-4, 1e-7) == 1e-4 && cosine_lr(DESK_STEPS, DESK_STEPS, 1e-4, 1e-7) == 1e-7;
    (
        tab_ok && char_ok && fft_ok && lr_ok,
        format!("tab(f) = 2f: {tab_ok}, charbonnier(o,o) = 1e-3: {char_ok}, fft_loss(o,o) = 0: {fft_ok}, lr endpoints: {lr_ok}"),
    )
}

// ---- criterion 4 ----

fn identity_at_init(test: &[Pair]) -> (bool, String) {
    let model = TaNet::<f32>::new(&desk_network()).expect("model");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = Tensor::from_fn(Shape::new(2, 16, 24, 3), |_, _, _, _| rng.gen_range(0.0f32..1.0));
    let bitwise = model.forward_tensor(&x).expect("forward") == x;
    let report = evaluate(&model, test).expect("evaluate");
    let exact = report.kinds.iter().all(|k| k.psnr_restored == k.psnr_degraded)
        && report.average_restored == report.average_degraded;
    (
        bitwise && exact,
        format!(
            "forward(x) == x bitwise: {bitwise}; eval equals degraded baseline exactly: {exact} ({:.4} dB)",
            report.average_degraded
        ),
    )
}

// ---- criterion 5 ----

struct OverfitRun {
    degraded_db: f64,
    restored_db: f64,
    checkpoint: Vec<u8>,
    elapsed: Duration,
}

fn overfit_run() -> OverfitRun {
    let start = Instant::now();
    let clean = quantize(&scene::procedural_scene(32, 32, SEED));
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let spec = DegradationSpec::random(WeatherKind::Haze, 32, 32, &mut rng);
    let degraded = quantize(&apply(&clean, &spec).expect("synth"));
    let pair = Pair {
        kind: WeatherKind::Haze,
        degraded: degraded.clone(),
        clean: clean.clone(),
    };
    let mut model = TaNet::<f32>::new(&NetworkConfig {
        seed: SEED,
        ..NetworkConfig::tiny()
    })
    .expect("model");
    let mut state = TrainState::new(&model, 500, 1e-4, 1e-7, SEED, LossConfig::default());
    let opts = TrainOptions {
        steps: 500,
        batch: 1,
        crop: 32,
        ..Default::default()
    };
    train(&mut model, std::slice::from_ref(&pair), &mut state, &opts, |_| {}).expect("train");
    let restored = model.restore(&degraded).expect("restore");
    OverfitRun {
        degraded_db: psnr(&degraded, &clean, 1.0).unwrap(),
        restored_db: psnr(&restored, &clean, 1.0).unwrap(),
        checkpoint: checkpoint::encode(&model),
        elapsed: start.elapsed(),
    }
}

// ---- criteria 6 and 7 ----

fn desk_network() -> NetworkConfig {
    NetworkConfig {
        base_channels: DESK_BASE_CHANNELS,
        num_tabs: 2,
        seed: TRAIN_SEED,
        ..NetworkConfig::default()
    }
}

struct DeskData {
    built: BuiltDataset,
    train: Vec<Pair>,
    test: Vec<Pair>,
}

fn desk_data(root: &Path) -> DeskData {
    let scenes = root.join("scenes");
    scene::write_scenes(&scenes, DESK_SCENES, DESK_SCENE_SIDE, DESK_SCENE_SIDE, SEED).expect("scenes");
    let built = build_dataset(&scenes, &root.join("data"), DESK_PER_KIND, 0.9, SEED).expect("dataset");
    let train = load_pairs(&built.train).expect("train pairs");
    let test = load_pairs(&built.test).expect("test pairs");
    DeskData { built, train, test }
}

fn desk_ablation(data: &DeskData, out_dir: &Path) -> AblationTable {
    let settings = AblationSettings {
        network: desk_network(),
        steps: DESK_STEPS,
        batch: DESK_BATCH,
        crop: DESK_CROP,
        lr0: 1e-4,
        lr_min: 1e-7,
        seed: TRAIN_SEED,
        loss: LossConfig::default(),
        out_dir: Some(out_dir.to_path_buf()),
    };
    // Net5 first: it is also criterion 6's run.
    let order = [Variant::Net5, Variant::Net1, Variant::Net2, Variant::Net3, Variant::Net4];
    let mut table = run_ablation::<f32>(&settings, &data.train, &data.test, &data.built.train.digest(), &order, |v, p| {
        if p.step % 500 == 0 {
            eprintln!("  {v} step {:>4} loss {:.5}", p.step, p.loss);
        }
    })
    .expect("ablation");
    table.rows.sort_by_key(|r| r.variant.code());
    table
}

#[test]
fn acceptance() {
    let mut outcomes = Vec::new();

    let (ok, detail) = gradient_correctness();
    report(&mut outcomes, 1, "gradient correctness", ok, detail);

    let (ok, detail) = kernel_oracles();
    report(&mut outcomes, 2, "kernel oracles", ok, detail);

    let (ok, detail) = closed_form_fixtures();
    report(&mut outcomes, 3, "closed-form fixtures", ok, detail);

    let tmp = tempfile::tempdir().expect("tempdir");
    let data = desk_data(&tmp.path().join("run1"));
    assert_eq!(data.train.len(), 270);
    assert_eq!(data.test.len(), 30);

    let (ok, detail) = identity_at_init(&data.test);
    report(&mut outcomes, 4, "identity at init", ok, detail);

    let first = overfit_run();
    let gain = first.restored_db - first.degraded_db;
    report(
        &mut outcomes,
        5,
        "single-pair overfit",
        gain >= 3.0 && within(first.elapsed, 300),
        format!(
            "degraded {:.2} dB -> restored {:.2} dB, gain {gain:.2} dB (need >= 3), {:.1}s (limit 300s)",
            first.degraded_db,
            first.restored_db,
            first.elapsed.as_secs_f64()
        ),
    );

    let table = desk_ablation(&data, &tmp.path().join("run1/ablation"));
    say(&table.to_text());
    let net5 = table.row(Variant::Net5).expect("Net5 row");
    let net1 = table.row(Variant::Net1).expect("Net1 row");
    let desk_gain = net5.report.average_delta();
    let pinned_ok = (desk_gain - PINNED_DESK_GAIN_DB).abs() <= PINNED_TOLERANCE_DB;
    let kinds_present = net5.report.kinds.len() == 3;
    report(
        &mut outcomes,
        6,
        "desk-scale end-to-end",
        desk_gain >= 1.0 && kinds_present && pinned_ok && net5.train_seconds <= 1200.0,
        format!(
            "held-out gain {desk_gain:.3} dB over identity (need >= 1; pinned {PINNED_DESK_GAIN_DB:.3} +/- {PINNED_TOLERANCE_DB}), \
             base {DESK_BASE_CHANNELS}, trained in {:.0}s (limit 1200s)",
            net5.train_seconds
        ),
    );

    let gap = net5.report.average_restored - net1.report.average_restored;
    report(
        &mut outcomes,
        7,
        "ablation direction",
        gap >= 0.3 && table.rows.len() == 5,
        format!(
            "Net5 - Net1 = {gap:.3} dB (need >= 0.3), {} rows, manifest {}",
            table.rows.len(),
            table.manifest_hash
        ),
    );

    let full = NetworkConfig::full_scale();
    let n = param_count_for(&full).expect("count");
    report(
        &mut outcomes,
        8,
        "full-scale parameter count",
        (8_100_000..=9_900_000).contains(&n),
        format!("base {} x {} blocks -> {n} params ({:.2} M)", full.base_channels, full.num_tabs, n as f64 / 1e6),
    );

    // Criterion 9: rerun 5-7 from scratch, including the dataset.
    let second = overfit_run();
    let data2 = desk_data(&tmp.path().join("run2"));
    let table2 = desk_ablation(&data2, &tmp.path().join("run2/ablation"));
    let same_data = data.built.train.to_text() == data2.built.train.to_text()
        && data.built.test.to_text() == data2.built.test.to_text();
    let same_overfit = first.checkpoint == second.checkpoint && first.restored_db.to_bits() == second.restored_db.to_bits();
    let mut same_files = true;
    for name in ["ablation.txt", "ablation.csv", "net1.ckpt", "net2.ckpt", "net3.ckpt", "net4.ckpt", "net5.ckpt"] {
        let a = std::fs::read(tmp.path().join("run1/ablation").join(name)).expect("first run output");
        let b = std::fs::read(tmp.path().join("run2/ablation").join(name)).expect("second run output");
        same_files &= a == b;
    }
    let same_reports = table.rows.iter().zip(&table2.rows).all(|(a, b)| a.report.to_csv() == b.report.to_csv());
    report(
        &mut outcomes,
        9,
        "determinism",
        same_data && same_overfit && same_files && same_reports,
        format!(
            "manifests identical: {same_data}; overfit checkpoint identical: {same_overfit}; \
             ablation checkpoints and tables identical: {same_files}; eval reports identical: {same_reports}"
        ),
    );

    say("\nsummary:");
    for o in &outcomes {
        say(&format!("  [{}] {}. {}", if o.passed { "PASS" } else { "FAIL" }, o.id, o.name));
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("{}. {} ({})", o.id, o.name, o.detail))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:#?}");
}
