use std::fmt::Write as _;
use std::time::Instant;

use super::TrainError;
use crate::loss::{psnr, PSNR_TABLE_CAP};
use crate::nn::TaNet;
use crate::tensor::{Real, Shape, Tensor};
use crate::weather::{Pair, WeatherKind};

#[derive(Debug, Clone, PartialEq)]
pub struct KindScore {
    pub kind: WeatherKind,
    pub count: usize,
    /// Mean per-image PSNR of restored vs clean.
    pub psnr_restored: f64,
    /// Mean per-image PSNR of degraded vs clean (identity baseline).
    pub psnr_degraded: f64,
}

impl KindScore {
    pub fn delta(&self) -> f64 {
        self.psnr_restored - self.psnr_degraded
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Kinds present in the test set, in haze, rain, snow order.
    pub kinds: Vec<KindScore>,
    pub missing: Vec<WeatherKind>,
    /// Arithmetic mean over the present kinds.
    pub average_restored: f64,
    pub average_degraded: f64,
    pub param_count: usize,
    /// Mean wall time of one 256x256 restoration, when measured.
    pub inference_ms: Option<f64>,
}

fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

impl EvalReport {
    pub fn kind(&self, kind: WeatherKind) -> Option<&KindScore> {
        self.kinds.iter().find(|k| k.kind == kind)
    }

    pub fn average_delta(&self) -> f64 {
        self.average_restored - self.average_degraded
    }

    /// `kind,psnr_restored,psnr_degraded,delta` rows plus an `average` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,psnr_restored,psnr_degraded,delta\n");
        for k in &self.kinds {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                k.kind,
                fmt_psnr(k.psnr_restored),
                fmt_psnr(k.psnr_degraded),
                fmt_psnr(k.delta())
            );
        }
        let _ = writeln!(
            out,
            "average,{},{},{}",
            fmt_psnr(self.average_restored),
            fmt_psnr(self.average_degraded),
            fmt_psnr(self.average_delta())
        );
        out
    }

    pub fn to_text(&self) -> String {
        let cap = |v: f64| fmt_psnr(v.min(PSNR_TABLE_CAP));
        let mut out = format!("{:<8} {:>6} {:>14} {:>14} {:>8}\n", "kind", "images", "psnr_restored", "psnr_degraded", "delta");
        for k in &self.kinds {
            let _ = writeln!(
                out,
                "{:<8} {:>6} {:>14} {:>14} {:>8}",
                k.kind.name(),
                k.count,
                cap(k.psnr_restored),
                cap(k.psnr_degraded),
                cap(k.delta())
            );
        }
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>14} {:>14} {:>8}",
            "average",
            self.kinds.iter().map(|k| k.count).sum::<usize>(),
            cap(self.average_restored),
            cap(self.average_degraded),
            cap(self.average_delta())
        );
        let _ = writeln!(out, "params: {} ({:.3} M)", self.param_count, self.param_count as f64 / 1e6);
        if let Some(ms) = self.inference_ms {
            let _ = writeln!(out, "inference at 256x256: {ms:.1} ms/image");
        }
        for kind in &self.missing {
            let _ = writeln!(out, "warning: no {kind} images in the test set; average covers present kinds only");
        }
        out
    }
}

/// Restores every test pair and scores it against its clean image.
pub fn evaluate<T: Real>(model: &TaNet<T>, pairs: &[Pair]) -> Result<EvalReport, TrainError> {
    let mut kinds = Vec::new();
    let mut missing = Vec::new();
    for kind in WeatherKind::ALL {
        let subset: Vec<&Pair> = pairs.iter().filter(|p| p.kind == kind).collect();
        if subset.is_empty() {
            missing.push(kind);
            continue;
        }
        let (mut restored, mut degraded) = (0.0, 0.0);
        for p in &subset {
            let out = model.restore(&p.degraded.cast::<T>())?;
            restored += psnr(&out, &p.clean.cast::<T>(), 1.0)?;
            degraded += psnr(&p.degraded, &p.clean, 1.0)?;
        }
        let n = subset.len() as f64;
        kinds.push(KindScore {
            kind,
            count: subset.len(),
            psnr_restored: restored / n,
            psnr_degraded: degraded / n,
        });
    }
    if kinds.is_empty() {
        return Err(TrainError::Data("test set has no pairs".into()));
    }
    let n = kinds.len() as f64;
    Ok(EvalReport {
        average_restored: kinds.iter().map(|k| k.psnr_restored).sum::<f64>() / n,
        average_degraded: kinds.iter().map(|k| k.psnr_degraded).sum::<f64>() / n,
        kinds,
        missing,
        param_count: model.param_count(),
        inference_ms: None,
    })
}

/// Mean milliseconds per `side x side` restoration over `reps` runs.
pub fn time_inference<T: Real>(model: &TaNet<T>, side: usize, reps: usize) -> Result<f64, TrainError> {
    let img = Tensor::from_fn(Shape::new(1, side, side, 3), |_, i, j, c| {
        T::lit(((i * 7 + j * 13 + c * 5) % 31) as f64 / 31.0)
    });
    let reps = reps.max(1);
    let start = Instant::now();
    for _ in 0..reps {
        model.restore(&img)?;
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / reps as f64)
}
