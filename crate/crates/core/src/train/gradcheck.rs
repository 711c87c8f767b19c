//! Central-difference checks of the analytic gradients, in double precision.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::loss::{charbonnier_global_var, charbonnier_var, fft_loss_var, total_loss_var, LossConfig};
use crate::nn::{Bound, Components, GdaModule, GsaModule, Init, LpaModule, NetworkConfig, ParamId, ParamStore, TaBlock, TaNet};
use crate::tensor::{Graph, Result, Shape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub h: f64,
    /// Maximum relative error per entry.
    pub tolerance: f64,
    /// Entries whose absolute error is below this pass regardless of the
    /// relative error. Rounding noise of the difference quotient is about
    /// `1e-16 * |loss| / h`, around 1e-10 for the checks here.
    pub abs_floor: f64,
    /// Entries sampled per parameter tensor; smaller tensors are checked fully.
    pub max_entries: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-8,
            max_entries: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub checked: usize,
    /// Largest relative error among entries above the absolute floor.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub label: String,
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let max_abs = self.groups.iter().map(|g| g.max_abs_error).fold(0.0, f64::max);
        let mut out = format!(
            "{}: {} (max rel error {:.3e}, max abs error {:.3e})\n",
            self.label,
            if self.passed() { "pass" } else { "FAIL" },
            self.max_rel_error(),
            max_abs
        );
        for g in &self.groups {
            let _ = writeln!(
                out,
                "  {:<36} {:>4} entries  rel {:.3e}  abs {:.3e}  {}",
                g.name,
                g.checked,
                g.max_rel_error,
                g.max_abs_error,
                if g.passed { "ok" } else { "FAIL" }
            );
        }
        out
    }
}

/// Compares the tape gradient of the scalar built by `build` against central
/// differences, for every tensor in `store`.
pub fn gradient_check(
    label: &str,
    store: &ParamStore<f64>,
    build: impl Fn(&mut Graph<f64>, &Bound) -> Result<Var>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut g = Graph::new();
    let bound = store.bind(&mut g, true);
    let loss = build(&mut g, &bound)?;
    let grads = g.backward(loss)?;

    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let b = s.bind(&mut g, false);
        let y = build(&mut g, &b)?;
        Ok(g.value(y).data()[0])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut groups = Vec::new();
    let mut probe = store.clone();
    for id in store.ids() {
        let n = store.shape(id).numel();
        let analytic = grads.get_or_zeros(bound.var(id), store.shape(id));
        let entries: Vec<usize> = if n <= opts.max_entries {
            (0..n).collect()
        } else {
            let mut v = sample(&mut rng, n, opts.max_entries).into_vec();
            v.sort_unstable();
            v
        };
        let (mut max_rel, mut max_abs, mut passed) = (0.0f64, 0.0f64, true);
        for &k in &entries {
            let orig = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + opts.h;
            let plus = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig - opts.h;
            let minus = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * opts.h);
            let a = analytic.data()[k];
            let abs = (a - numeric).abs();
            max_abs = max_abs.max(abs);
            if abs > opts.abs_floor {
                let rel = abs / a.abs().max(numeric.abs());
                max_rel = max_rel.max(rel);
                passed &= rel <= opts.tolerance;
            }
            passed &= abs.is_finite();
        }
        groups.push(GroupReport {
            name: store.name(id).to_string(),
            checked: entries.len(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            passed,
        });
    }
    Ok(GradCheckReport {
        label: label.to_string(),
        groups,
    })
}

/// Shifts every parameter by uniform noise so biases, gamma and beta are
/// checked away from their initial values.
fn jitter(store: &mut ParamStore<f64>, seed: u64, amount: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v += rng.gen_range(-amount..amount);
        }
    }
}

fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(lo..hi))
}

/// `sum(y * r)` for a fixed random `r`, so every output entry matters.
fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let r = random_tensor(g.shape(y), &mut rng, -1.0, 1.0);
    let r = g.constant(r);
    let prod = g.mul(y, r)?;
    Ok(g.sum(prod))
}

/// Module input registered as a parameter named `input`.
fn with_input(store: &mut ParamStore<f64>, shape: Shape) -> ParamId {
    store.add("input", shape, Init::FanInUniform { fan_in: 1 })
}

pub fn check_lpa(shape: Shape, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut store = ParamStore::new(opts.seed);
    let m = LpaModule::new(&mut store, "lpa");
    let x = with_input(&mut store, shape);
    jitter(&mut store, opts.seed + 1, 0.1);
    gradient_check(&format!("LPA {shape}"), &store, |g, p| {
        let y = m.forward(g, p, p.var(x))?;
        project(g, y, opts.seed)
    }, opts)
}

pub fn check_gsa(shape: Shape, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut store = ParamStore::new(opts.seed);
    let m = GsaModule::new(&mut store, "gsa", shape.channels);
    let x = with_input(&mut store, shape);
    jitter(&mut store, opts.seed + 1, 0.1);
    gradient_check(&format!("GSA {shape}"), &store, |g, p| {
        let y = m.forward(g, p, p.var(x))?;
        project(g, y, opts.seed)
    }, opts)
}

pub fn check_gda(shape: Shape, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut store = ParamStore::new(opts.seed);
    let m = GdaModule::new(&mut store, "gda", shape.channels)?;
    let x = with_input(&mut store, shape);
    jitter(&mut store, opts.seed + 1, 0.1);
    gradient_check(&format!("GDA {shape}"), &store, |g, p| {
        let y = m.forward(g, p, p.var(x))?;
        project(g, y, opts.seed)
    }, opts)
}

pub fn check_tab(shape: Shape, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut store = ParamStore::new(opts.seed);
    let m = TaBlock::new(&mut store, "tab", shape.channels, Components::ALL)?;
    let x = with_input(&mut store, shape);
    jitter(&mut store, opts.seed + 1, 0.1);
    gradient_check(&format!("TAB {shape}"), &store, |g, p| {
        let y = m.forward(g, p, p.var(x))?;
        project(g, y, opts.seed)
    }, opts)
}

/// Both Charbonnier forms, the frequency loss and their weighted sum, with
/// respect to the restored image.
pub fn check_losses(shape: Shape, opts: &GradCheckOptions) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed + 7);
    let target = random_tensor(shape, &mut rng, 0.0, 1.0);
    let mut store = ParamStore::new(opts.seed);
    let o = store.add("restored", shape, Init::Zeros);
    store.set(o, random_tensor(shape, &mut rng, 0.0, 1.0))?;
    let cfg = LossConfig::default();
    let eps = cfg.epsilon;
    let with_target = |g: &mut Graph<f64>| g.constant(target.clone());
    Ok(vec![
        gradient_check(&format!("Charbonnier {shape}"), &store, |g, p| {
            let t = with_target(g);
            charbonnier_var(g, p.var(o), t, eps)
        }, opts)?,
        gradient_check(&format!("Charbonnier (global norm) {shape}"), &store, |g, p| {
            let t = with_target(g);
            charbonnier_global_var(g, p.var(o), t, eps)
        }, opts)?,
        gradient_check(&format!("FFT loss {shape}"), &store, |g, p| {
            let t = with_target(g);
            fft_loss_var(g, p.var(o), t)
        }, opts)?,
        gradient_check(&format!("total loss {shape}"), &store, |g, p| {
            let t = with_target(g);
            total_loss_var(g, p.var(o), t, &cfg)
        }, opts)?,
    ])
}

/// Full network with a random tail, the input included as a group.
pub fn check_model(config: &NetworkConfig, shape: Shape, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let model = TaNet::<f64>::with_random_tail(config)?;
    let mut store = model.params().clone();
    let x = with_input(&mut store, shape);
    jitter(&mut store, opts.seed + 1, 0.05);
    gradient_check(
        &format!("{}-TAB model (base {}) {shape}", config.num_tabs, config.base_channels),
        &store,
        |g, p| {
            let y = model.forward(g, p, p.var(x))?;
            project(g, y, opts.seed)
        },
        opts,
    )
}

/// The standard battery: LPA, GSA, GDA, one TAB, the losses and a tiny
/// two-block model on 8x8x3.
pub fn standard_suite(opts: &GradCheckOptions) -> Result<Vec<GradCheckReport>> {
    let mut out = vec![
        check_lpa(Shape::new(1, 4, 4, 2), opts)?,
        check_gsa(Shape::new(1, 5, 4, 2), opts)?,
        check_gda(Shape::new(1, 4, 5, 4), opts)?,
        check_tab(Shape::new(1, 4, 4, 4), opts)?,
    ];
    out.extend(check_losses(Shape::new(1, 4, 5, 3), opts)?);
    out.extend(check_losses(Shape::new(2, 4, 4, 2), opts)?);
    out.push(check_model(&NetworkConfig::tiny(), Shape::new(1, 8, 8, 3), opts)?);
    Ok(out)
}
