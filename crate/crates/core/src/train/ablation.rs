use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use super::eval::{evaluate, EvalReport};
use super::trainer::{curve_csv, train, LossPoint, TrainOptions, TrainState};
use super::TrainError;
use crate::checkpoint;
use crate::loss::{LossConfig, PSNR_TABLE_CAP};
use crate::nn::{NetworkConfig, TaNet, Variant};
use crate::tensor::Real;
use crate::weather::{Pair, WeatherKind};

/// Full-scale Net5 scores (haze, rain, snow, average) from the original
/// 500k-iteration training. Kept for comparison, never asserted.
pub const FULL_SCALE_NET5: [f64; 4] = [33.33, 31.50, 29.91, 31.58];

#[derive(Debug, Clone)]
pub struct AblationSettings {
    /// Shared architecture; the variant field is overridden per row.
    pub network: NetworkConfig,
    pub steps: usize,
    pub batch: usize,
    pub crop: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub seed: u64,
    pub loss: LossConfig,
    /// Per-variant checkpoints, loss curves and the tables go here.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: Variant,
    pub params: usize,
    pub report: EvalReport,
    pub curve: Vec<LossPoint>,
    pub checkpoint_digest: String,
    pub train_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub manifest_hash: String,
    pub steps: usize,
    pub baseline: EvalReport,
    pub rows: Vec<AblationRow>,
}

fn score(r: &EvalReport, kind: WeatherKind) -> String {
    match r.kind(kind) {
        Some(k) => format!("{:.2}", k.psnr_restored.min(PSNR_TABLE_CAP)),
        None => "-".into(),
    }
}

fn degraded_score(r: &EvalReport, kind: WeatherKind) -> String {
    match r.kind(kind) {
        Some(k) => format!("{:.2}", k.psnr_degraded.min(PSNR_TABLE_CAP)),
        None => "-".into(),
    }
}

impl AblationTable {
    pub fn row(&self, variant: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// Aligned table: one row per variant plus the degraded-input baseline.
    pub fn to_text(&self) -> String {
        let mut out = format!("manifest {}  steps {}\n", self.manifest_hash, self.steps);
        let _ = writeln!(out, "{:<9} {:>9} {:>7} {:>7} {:>7} {:>8}", "variant", "params", "haze", "rain", "snow", "average");
        let b = &self.baseline;
        let _ = writeln!(
            out,
            "{:<9} {:>9} {:>7} {:>7} {:>7} {:>8.2}",
            "degraded",
            "-",
            degraded_score(b, WeatherKind::Haze),
            degraded_score(b, WeatherKind::Rain),
            degraded_score(b, WeatherKind::Snow),
            b.average_degraded.min(PSNR_TABLE_CAP)
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<9} {:>9} {:>7} {:>7} {:>7} {:>8.2}",
                r.variant.to_string(),
                r.params,
                score(&r.report, WeatherKind::Haze),
                score(&r.report, WeatherKind::Rain),
                score(&r.report, WeatherKind::Snow),
                r.report.average_restored.min(PSNR_TABLE_CAP)
            );
        }
        let [h, ra, s, a] = FULL_SCALE_NET5;
        let _ = writeln!(out, "full-scale Net5 reference (not reproduced here): {h:.2} {ra:.2} {s:.2} {a:.2}");
        out
    }

    /// `variant,params,haze,rain,snow,average,checkpoint` at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# manifest {}\nvariant,params,haze,rain,snow,average,checkpoint\n", self.manifest_hash);
        let full = |r: &EvalReport, k| r.kind(k).map(|s| format!("{:.6}", s.psnr_restored)).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{}",
                r.variant,
                r.params,
                full(&r.report, WeatherKind::Haze),
                full(&r.report, WeatherKind::Rain),
                full(&r.report, WeatherKind::Snow),
                r.report.average_restored,
                r.checkpoint_digest
            );
        }
        out
    }
}

fn write(path: PathBuf, text: &str) -> Result<(), TrainError> {
    std::fs::write(&path, text).map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Trains each variant from the same seed on the same batches and scores it
/// on the same test pairs.
pub fn run_ablation<T: Real>(
    settings: &AblationSettings,
    train_pairs: &[Pair],
    test_pairs: &[Pair],
    manifest_hash: &str,
    variants: &[Variant],
    mut progress: impl FnMut(Variant, &LossPoint),
) -> Result<AblationTable, TrainError> {
    if let Some(dir) = &settings.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| TrainError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
    }
    let identity = TaNet::<T>::new(&settings.network)?;
    let baseline = evaluate(&identity, test_pairs)?;
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut model = TaNet::<T>::ablation_variant(&settings.network, variant)?;
        let mut state = TrainState::new(&model, settings.steps, settings.lr0, settings.lr_min, settings.seed, settings.loss);
        let opts = TrainOptions {
            steps: settings.steps,
            batch: settings.batch,
            crop: settings.crop,
            checkpoint: None,
            checkpoint_every: 0,
        };
        let start = Instant::now();
        let curve = train(&mut model, train_pairs, &mut state, &opts, |p| progress(variant, p))?;
        let train_seconds = start.elapsed().as_secs_f64();
        let report = evaluate(&model, test_pairs)?;
        let bytes = checkpoint::encode(&model);
        if let Some(dir) = &settings.out_dir {
            let name = variant.to_string().to_lowercase();
            let path = dir.join(format!("{name}.ckpt"));
            std::fs::write(&path, &bytes).map_err(|e| TrainError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            write(dir.join(format!("{name}_loss.csv")), &curve_csv(&curve))?;
        }
        rows.push(AblationRow {
            variant,
            params: model.param_count(),
            report,
            curve,
            checkpoint_digest: checkpoint::digest(&bytes),
            train_seconds,
        });
    }
    let table = AblationTable {
        manifest_hash: manifest_hash.to_string(),
        steps: settings.steps,
        baseline,
        rows,
    };
    if let Some(dir) = &settings.out_dir {
        write(dir.join("ablation.txt"), &table.to_text())?;
        write(dir.join("ablation.csv"), &table.to_csv())?;
    }
    Ok(table)
}
