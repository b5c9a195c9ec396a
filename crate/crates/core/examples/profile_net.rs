use normseg_core::normnet::{NetConfig, TinyNet};
use normseg_core::vol3::{Dims3, Mask3, Volume3};
use normseg_core::seeds;
use rand::Rng;
use std::time::Instant;

fn main() {
    let cfg = NetConfig { levels: 3, base_channels: 4, patch_dims: [32,32,32], ..NetConfig::default() };
    let net = TinyNet::init(cfg.clone(), 1).unwrap();
    let dims = Dims3::cube(32);
    let mut rng = seeds::rng_from(2);
    let data: Vec<f32> = (0..dims.len()).map(|_| rng.random_range(0.0..1.0)).collect();
    let patch = Volume3::new_windowed(dims, [1.0;3], data).unwrap();
    let gt = Mask3::from_bits(dims, (0..dims.len()).map(|_| rng.random_bool(0.3)).collect()).unwrap();

    let t0 = Instant::now();
    let n = 30;
    for _ in 0..n { let _ = net.forward_volume(&patch).unwrap(); }
    let fwd = t0.elapsed().as_secs_f64() / n as f64;
    let t1 = Instant::now();
    for _ in 0..n { let _ = net.loss_and_gradients(&patch, &gt).unwrap(); }
    let both = t1.elapsed().as_secs_f64() / n as f64;
    println!("forward: {:.1} ms, forward+backward: {:.1} ms", fwd*1e3, both*1e3);
}
