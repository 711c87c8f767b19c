use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optim::{cosine_lr, Adam, AdamConfig};
use super::TrainError;
use crate::checkpoint;
use crate::loss::{total_loss_var, LossConfig};
use crate::nn::TaNet;
use crate::tensor::{Graph, Real, Tensor};
use crate::weather::{augment, Pair};

/// Optimizer, schedule and sampling state of a run.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub step: usize,
    pub total_steps: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub adam: Adam<T>,
    rng: ChaCha8Rng,
}

impl<T: Real> TrainState<T> {
    /// Fresh state; the frequency term follows the model's variant.
    pub fn new(model: &TaNet<T>, total_steps: usize, lr0: f64, lr_min: f64, seed: u64, loss: LossConfig) -> Self {
        let loss = LossConfig {
            fft_enabled: loss.fft_enabled && model.config().variant.uses_fft_loss(),
            ..loss
        };
        Self {
            step: 0,
            total_steps,
            lr0,
            lr_min,
            seed,
            loss,
            adam: Adam::new(model.params(), AdamConfig::default()),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn lr(&self) -> f64 {
        cosine_lr(self.step, self.total_steps, self.lr0, self.lr_min)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch: usize,
    pub crop: usize,
    /// Written every `checkpoint_every` steps (if non-zero) and at the end.
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// `step,loss,lr` with a header row.
pub fn curve_csv(curve: &[LossPoint]) -> String {
    let mut out = String::from("step,loss,lr\n");
    for p in curve {
        let _ = writeln!(out, "{},{:.9e},{:.9e}", p.step, p.loss, p.lr);
    }
    out
}

/// Mean of the first and last `window` losses.
pub fn smoothed_ends(curve: &[LossPoint], window: usize) -> Option<(f64, f64)> {
    let w = window.min(curve.len());
    if w == 0 {
        return None;
    }
    let mean = |s: &[LossPoint]| s.iter().map(|p| p.loss).sum::<f64>() / s.len() as f64;
    Some((mean(&curve[..w]), mean(&curve[curve.len() - w..])))
}

fn sample_batch<T: Real>(pairs: &[Pair], batch: usize, crop: usize, rng: &mut ChaCha8Rng) -> Result<(Tensor<T>, Tensor<T>), TrainError> {
    let mut inputs = Vec::with_capacity(batch);
    let mut targets = Vec::with_capacity(batch);
    for _ in 0..batch {
        let pair = &pairs[rng.gen_range(0..pairs.len())];
        let (d, c) = augment(&pair.degraded, &pair.clean, crop, rng)?;
        inputs.push(d.cast::<T>());
        targets.push(c.cast::<T>());
    }
    Ok((Tensor::stack(&inputs)?, Tensor::stack(&targets)?))
}

/// Runs up to `opts.steps` optimizer steps (never past `state.total_steps`)
/// and returns the per-step loss curve. `progress` sees every point.
pub fn train<T: Real>(
    model: &mut TaNet<T>,
    pairs: &[Pair],
    state: &mut TrainState<T>,
    opts: &TrainOptions,
    mut progress: impl FnMut(&LossPoint),
) -> Result<Vec<LossPoint>, TrainError> {
    let end = (state.step + opts.steps).min(state.total_steps);
    let mut curve = Vec::with_capacity(end - state.step);
    if state.step == end {
        return Ok(curve);
    }
    if pairs.is_empty() {
        return Err(TrainError::Data("training set is empty".into()));
    }
    if opts.batch == 0 {
        return Err(TrainError::Data("batch must be >= 1".into()));
    }
    state.loss.validate()?;
    while state.step < end {
        let lr = state.lr();
        let (x, y) = sample_batch::<T>(pairs, opts.batch, opts.crop, &mut state.rng)?;
        let mut g = Graph::new();
        let bound = model.params().bind(&mut g, true);
        let xv = g.constant(x);
        let yv = g.constant(y);
        let out = model.forward(&mut g, &bound, xv)?;
        let loss = total_loss_var(&mut g, out, yv, &state.loss)?;
        let value = g.value(loss).data()[0].as_f64();
        if !value.is_finite() {
            return Err(TrainError::NonFinite(format!("loss is {value} at step {}", state.step)));
        }
        let grads = g.backward(loss)?;
        state.adam.step(model.params_mut(), &grads, bound.vars(), lr)?;
        let point = LossPoint {
            step: state.step,
            loss: value,
            lr,
        };
        progress(&point);
        curve.push(point);
        state.step += 1;
        if let Some(path) = &opts.checkpoint {
            if opts.checkpoint_every > 0 && state.step.is_multiple_of(opts.checkpoint_every) && state.step < end {
                checkpoint::save(model, path)?;
            }
        }
    }
    if let Some(path) = &opts.checkpoint {
        checkpoint::save(model, path)?;
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkConfig;
    use crate::tensor::Shape;
    use crate::weather::WeatherKind;

    fn pairs() -> Vec<Pair> {
        let clean = Tensor::from_fn(Shape::new(1, 8, 8, 3), |_, i, j, c| ((i + 2 * j + c) % 5) as f32 / 5.0);
        vec![Pair {
            kind: WeatherKind::Haze,
            degraded: clean.map(|v| 0.5 * v + 0.4),
            clean,
        }]
    }

    #[test]
    fn zero_steps_is_a_noop() {
        let mut model = TaNet::<f64>::new(&NetworkConfig::tiny()).unwrap();
        let before = checkpoint::encode(&model);
        let mut state = TrainState::new(&model, 10, 1e-3, 1e-6, 0, LossConfig::default());
        let opts = TrainOptions {
            steps: 0,
            batch: 1,
            crop: 8,
            ..Default::default()
        };
        let curve = train(&mut model, &pairs(), &mut state, &opts, |_| {}).unwrap();
        assert!(curve.is_empty());
        assert_eq!(checkpoint::encode(&model), before);
    }

    #[test]
    fn deterministic_and_checkpointed() {
        let dir = tempfile::tempdir().unwrap();
        let run = |path: PathBuf| {
            let mut model = TaNet::<f32>::new(&NetworkConfig::tiny()).unwrap();
            let mut state = TrainState::new(&model, 6, 1e-3, 1e-6, 3, LossConfig::default());
            let opts = TrainOptions {
                steps: 6,
                batch: 2,
                crop: 8,
                checkpoint: Some(path.clone()),
                checkpoint_every: 2,
            };
            let curve = train(&mut model, &pairs(), &mut state, &opts, |_| {}).unwrap();
            (curve, std::fs::read(path).unwrap())
        };
        let (a, ca) = run(dir.path().join("a.ckpt"));
        let (b, cb) = run(dir.path().join("b.ckpt"));
        assert_eq!(a, b);
        assert_eq!(ca, cb);
        assert_eq!(a.len(), 6);
        assert_eq!(a[0].lr, 1e-3);
        assert!(curve_csv(&a).starts_with("step,loss,lr\n0,"));
    }

    #[test]
    fn empty_data_and_small_images_are_errors() {
        let mut model = TaNet::<f32>::new(&NetworkConfig::tiny()).unwrap();
        let mut state = TrainState::new(&model, 4, 1e-3, 1e-6, 0, LossConfig::default());
        let mut opts = TrainOptions {
            steps: 2,
            batch: 1,
            crop: 8,
            ..Default::default()
        };
        assert!(train(&mut model, &[], &mut state, &opts, |_| {}).is_err());
        opts.crop = 16;
        assert!(train(&mut model, &pairs(), &mut state, &opts, |_| {}).is_err());
    }
}
