use std::path::{Path, PathBuf};

use tanet::checkpoint;
use tanet::config::{Precision, RunConfig};
use tanet::nn::{param_count_for, NetworkConfig, TaNet, Variant};
use tanet::tensor::Real;
use tanet::train::{
    curve_csv, evaluate, gradcheck, run_ablation, smoothed_ends, time_inference, train as train_loop,
    AblationSettings, GradCheckOptions, TrainOptions, TrainState,
};
use tanet::weather::{
    build_dataset, load_image, load_pairs, save_image, scene, DatasetManifest, WeatherKind, TEST_MANIFEST,
    TRAIN_MANIFEST,
};

use crate::error::CliError;
use crate::ConfigArgs;

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Resolves the config file plus overrides, prints it and echoes it into
/// `out_dir`.
fn resolve(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        if !tanet::config::KEYS.contains(&k.trim()) {
            return Err(CliError::Usage(format!("unknown key '{}'", k.trim())));
        }
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    print!("{}", cfg.to_text());
    cfg.echo_into(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;
    Ok(cfg)
}

pub fn synth(
    clean_dir: Option<PathBuf>,
    out_dir: &Path,
    per_kind: usize,
    split: f64,
    seed: u64,
    scenes: usize,
    size: usize,
) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&split) {
        return Err(CliError::Usage(format!("--split {split} outside [0, 1]")));
    }
    let clean_dir = match clean_dir {
        Some(dir) => dir,
        None => {
            if scenes == 0 || size < 8 {
                return Err(CliError::Usage("--scenes must be >= 1 and --size >= 8".into()));
            }
            let dir = out_dir.join("scenes");
            scene::write_scenes(&dir, scenes, size, size, seed)?;
            dir
        }
    };
    let built = build_dataset(&clean_dir, out_dir, per_kind, split, seed)?;
    for (name, m) in [("train", &built.train), ("test", &built.test)] {
        let counts: Vec<String> = WeatherKind::ALL.iter().map(|&k| format!("{k} {}", m.count(k))).collect();
        println!("{name}: {} pairs ({})  {}", m.len(), counts.join(", "), m.path().display());
    }
    Ok(())
}

fn load_split(cfg: &RunConfig, file: &str) -> Result<(DatasetManifest, Vec<tanet::weather::Pair>), CliError> {
    let manifest = DatasetManifest::load(&cfg.data_dir.join(file))?;
    let pairs = load_pairs(&manifest)?;
    Ok((manifest, pairs))
}

fn train_with<T: Real>(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, pairs) = load_split(cfg, TRAIN_MANIFEST)?;
    let mut model = TaNet::<T>::new(&cfg.network())?;
    println!("params: {}", model.param_count());
    let mut state = TrainState::new(&model, cfg.steps, cfg.lr0, cfg.lr_min, cfg.seed, cfg.loss());
    let ckpt = cfg.out_dir.join("model.ckpt");
    let opts = TrainOptions {
        steps: cfg.steps,
        batch: cfg.batch,
        crop: cfg.crop,
        checkpoint: Some(ckpt.clone()),
        checkpoint_every: cfg.checkpoint_every,
    };
    let every = (cfg.steps / 20).max(1);
    let curve = train_loop(&mut model, &pairs, &mut state, &opts, |p| {
        if p.step % every == 0 {
            eprintln!("step {:>6}  loss {:.6}  lr {:.3e}", p.step, p.loss, p.lr);
        }
    })?;
    write(&cfg.out_dir.join("loss.csv"), &curve_csv(&curve))?;
    if let Some((first, last)) = smoothed_ends(&curve, 50) {
        println!("smoothed loss: {first:.6} -> {last:.6}");
    }
    println!("checkpoint: {}", ckpt.display());

    let test_path = cfg.data_dir.join(TEST_MANIFEST);
    if test_path.exists() {
        let (_, test) = load_split(cfg, TEST_MANIFEST)?;
        if !test.is_empty() {
            let report = evaluate(&model, &test)?;
            print!("{}", report.to_text());
            write(&cfg.out_dir.join("eval.csv"), &report.to_csv())?;
            write(&cfg.out_dir.join("eval.txt"), &report.to_text())?;
        }
    }
    Ok(())
}

pub fn train(args: &ConfigArgs) -> Result<(), CliError> {
    let cfg = resolve(args)?;
    match cfg.precision {
        Precision::F32 => train_with::<f32>(&cfg),
        Precision::F64 => train_with::<f64>(&cfg),
    }
}

pub fn restore(ckpt: &Path, input: &Path, output: &Path) -> Result<(), CliError> {
    let model: TaNet<f32> = checkpoint::load(ckpt)?;
    let img = load_image(input)?;
    let out = model.restore(&img)?;
    save_image(output, &out)?;
    println!("{} -> {}", input.display(), output.display());
    Ok(())
}

pub fn eval(ckpt: &Path, manifest: &Path, out_dir: Option<PathBuf>, time_reps: usize) -> Result<(), CliError> {
    let model: TaNet<f32> = checkpoint::load(ckpt)?;
    let m = DatasetManifest::load(manifest)?;
    let pairs = load_pairs(&m)?;
    let mut report = evaluate(&model, &pairs)?;
    if time_reps > 0 {
        report.inference_ms = Some(time_inference(&model, 256, time_reps)?);
    }
    print!("{}", report.to_csv());
    let dir = out_dir.unwrap_or_else(|| ckpt.parent().map(Path::to_path_buf).unwrap_or_default());
    write(&dir.join("eval.csv"), &report.to_csv())?;
    write(&dir.join("eval.txt"), &report.to_text())?;
    Ok(())
}

pub fn ablate(args: &ConfigArgs) -> Result<(), CliError> {
    let cfg = resolve(args)?;
    let (manifest, train_pairs) = load_split(&cfg, TRAIN_MANIFEST)?;
    let (_, test_pairs) = load_split(&cfg, TEST_MANIFEST)?;
    let settings = AblationSettings {
        network: cfg.network(),
        steps: cfg.steps,
        batch: cfg.batch,
        crop: cfg.crop,
        lr0: cfg.lr0,
        lr_min: cfg.lr_min,
        seed: cfg.seed,
        loss: tanet::loss::LossConfig {
            fft_enabled: true,
            ..cfg.loss()
        },
        out_dir: Some(cfg.out_dir.clone()),
    };
    let every = (cfg.steps / 10).max(1);
    let table = run_ablation::<f32>(&settings, &train_pairs, &test_pairs, &manifest.digest(), &Variant::ALL, |v, p| {
        if p.step % every == 0 {
            eprintln!("{v} step {:>6}  loss {:.6}", p.step, p.loss);
        }
    })?;
    print!("{}", table.to_text());
    for r in &table.rows {
        eprintln!("{} trained in {:.1} s", r.variant, r.train_seconds);
    }
    Ok(())
}

pub fn gradcheck(args: &ConfigArgs) -> Result<(), CliError> {
    let cfg = resolve(args)?;
    let opts = GradCheckOptions {
        seed: cfg.seed,
        ..GradCheckOptions::default()
    };
    let reports = gradcheck::standard_suite(&opts)?;
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.to_text());
    }
    print!("{text}");
    write(&cfg.out_dir.join("gradcheck.txt"), &text)?;
    if reports.iter().all(|r| r.passed()) {
        Ok(())
    } else {
        Err(CliError::Failed("gradient check failed".into()))
    }
}

pub fn params(args: &ConfigArgs, full_scale: bool) -> Result<(), CliError> {
    let net = if full_scale {
        let net = NetworkConfig::full_scale();
        println!("base_channels = {}\nnum_tabs = {}", net.base_channels, net.num_tabs);
        net
    } else {
        resolve(args)?.network()
    };
    let n = param_count_for(&net)?;
    println!("params: {n} ({:.2} M)", n as f64 / 1e6);
    Ok(())
}

pub fn init(args: &ConfigArgs, output: &Path) -> Result<(), CliError> {
    let cfg = resolve(args)?;
    let model = TaNet::<f32>::new(&cfg.network())?;
    checkpoint::save(&model, output)?;
    println!("checkpoint: {}", output.display());
    Ok(())
}
