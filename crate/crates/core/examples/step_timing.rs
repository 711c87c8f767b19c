//! Times forward + backward of one training batch.
//!
//! cargo run --release -p tanet-core --example step_timing -- 16 2 4 64

use std::time::Instant;

use tanet::loss::{total_loss_var, LossConfig};
use tanet::nn::{NetworkConfig, TaNet};
use tanet::tensor::{Graph, Shape, Tensor};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let (base, tabs, batch, crop) = match args[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => (16, 2, 4, 64),
    };
    let cfg = NetworkConfig {
        base_channels: base,
        num_tabs: tabs,
        ..NetworkConfig::default()
    };
    let model = TaNet::<f32>::with_random_tail(&cfg).expect("config");
    let shape = Shape::new(batch, crop, crop, 3);
    let x = Tensor::from_fn(shape, |b, i, j, c| ((b + i * 3 + j * 5 + c) % 17) as f32 / 17.0);
    let y = x.map(|v| 1.0 - v);
    println!("params: {}", model.param_count());
    for _ in 0..3 {
        let t0 = Instant::now();
        let mut g = Graph::new();
        let p = model.params().bind(&mut g, true);
        let xv = g.constant(x.clone());
        let yv = g.constant(y.clone());
        let out = model.forward(&mut g, &p, xv).expect("forward");
        let t1 = Instant::now();
        let loss = total_loss_var(&mut g, out, yv, &LossConfig::default()).expect("loss");
        let _grads = g.backward(loss).expect("backward");
        let t2 = Instant::now();
        println!("forward {:?} backward {:?}", t1 - t0, t2 - t1);
    }
}
