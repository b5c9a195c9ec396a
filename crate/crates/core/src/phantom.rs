//! Procedural healthy-lung phantoms.
//!
//! A phantom is a raw-HU volume plus a lung mask: two ellipsoidal lungs full
//! of air, branching vessel trees with occasional junction hubs (the regular
//! bright structures a normalcy net must learn), soft partial-volume edges,
//! and optional mask-fringe artifacts that emulate lung-segmenter errors on
//! the boundary.

use rand::Rng;
use serde::Deserialize;

use crate::morphkit::{self, Rotation3, StructElem};
use crate::seeds;
use crate::vol3::{Dims3, Mask3, Spacing3, Volume3};
use crate::Result;

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
    /// Number of vessel trees per lung pair.
    pub vessel_trees: usize,
    /// Chance of each of two possible fringe artifacts on the mask.
    pub fringe_probability: f64,
    /// Per-voxel HU noise.
    pub noise_hu: f64,
    /// Fraction of lung voxels carrying an isolated bright speckle
    /// (sub-resolution vessel cross-sections and dust).
    pub air_speckle_density: f64,
    pub air_hu: f64,
    pub body_hu: f64,
    pub vessel_hu: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            dims: [64, 64, 64],
            spacing: [1.0, 1.0, 1.0],
            vessel_trees: 8,
            fringe_probability: 0.5,
            noise_hu: 18.0,
            air_speckle_density: 0.01,
            air_hu: -920.0,
            body_hu: 40.0,
            vessel_hu: -10.0,
        }
    }
}

struct Branch {
    pos: [f64; 3], // (z, y, x)
    dir: [f64; 3],
    radius: f64,
    depth: usize,
    steps: usize,
}

/// Deterministic phantom: raw HU volume plus the delivered lung mask (true
/// lung, possibly with fringe errors).
pub fn generate_phantom(cfg: &PhantomConfig, seed: u64) -> Result<(Volume3, Mask3)> {
    let dims = Dims3::new(cfg.dims[0], cfg.dims[1], cfg.dims[2]);
    let spacing: Spacing3 = cfg.spacing;
    let mut rng = seeds::rng_from(seeds::derive_seed(seed, seeds::STREAM_PHANTOM, 0));

    // Two ellipsoidal lungs side by side, lightly jittered.
    let mut lung = Mask3::empty(dims);
    for side in [0.28, 0.72] {
        let jitter = |r: &mut dyn FnMut() -> f64, scale: f64| scale * (1.0 + 0.08 * r());
        let mut draw = || rng.random_range(-1.0..1.0);
        let semi = [
            jitter(&mut draw, 0.17 * dims.w as f64),
            jitter(&mut draw, 0.28 * dims.h as f64),
            jitter(&mut draw, 0.38 * dims.d as f64),
        ];
        let center = [
            side * dims.w as f64 + draw(),
            0.5 * dims.h as f64 + draw(),
            0.5 * dims.d as f64 + draw(),
        ];
        let e = morphkit::voxelize_ellipsoid(semi, &Rotation3::identity(), center, dims);
        lung = lung.or(&e)?;
    }

    let mut hu = vec![cfg.body_hu as f32; dims.len()];
    for idx in lung.set_indices() {
        hu[idx] = cfg.air_hu as f32;
    }

    // Vessel trees: random walks with momentum, shrinking radius, junction
    // hubs, and occasional branching.
    let interior = morphkit::erode(&lung, StructElem::cube(1)?, 3);
    let interior_voxels: Vec<usize> = interior.set_indices().collect();
    let start_pool = if interior_voxels.is_empty() {
        lung.set_indices().collect::<Vec<_>>()
    } else {
        interior_voxels
    };
    if !start_pool.is_empty() {
        let mut stack: Vec<Branch> = Vec::new();
        for _ in 0..cfg.vessel_trees {
            let idx = start_pool[rng.random_range(0..start_pool.len())];
            let (z, y, x) = dims.coords(idx);
            stack.push(Branch {
                pos: [z as f64, y as f64, x as f64],
                dir: random_unit(&mut rng),
                radius: rng.random_range(1.5..2.8),
                depth: 0,
                steps: rng.random_range(22..36),
            });
        }
        while let Some(mut b) = stack.pop() {
            for step in 0..b.steps {
                // Momentum walk with a mild random turn.
                let turn = random_unit(&mut rng);
                for c in 0..3 {
                    b.dir[c] = 0.86 * b.dir[c] + 0.32 * turn[c];
                }
                normalize(&mut b.dir);
                for c in 0..3 {
                    b.pos[c] += 1.25 * b.dir[c];
                }
                let (z, y, x) = (b.pos[0].round() as i64, b.pos[1].round() as i64, b.pos[2].round() as i64);
                if !dims.in_bounds(z, y, x) || !lung.get(z as usize, y as usize, x as usize) {
                    break;
                }
                let taper = 1.0 - 0.5 * step as f64 / b.steps as f64;
                let jitter_hu = rng.random_range(-25.0..25.0);
                stamp_ball(&mut hu, &lung, dims, b.pos, b.radius * taper, (cfg.vessel_hu + jitter_hu) as f32);

                // Junction hub roughly every tenth step.
                if step % 10 == 9 {
                    let hub_r = rng.random_range(2.6..4.0);
                    stamp_ball(&mut hu, &lung, dims, b.pos, hub_r, (cfg.vessel_hu + jitter_hu) as f32);
                    if b.depth < 2 && rng.random_bool(0.6) {
                        stack.push(Branch {
                            pos: b.pos,
                            dir: random_unit(&mut rng),
                            radius: (b.radius * 0.8).max(1.1),
                            depth: b.depth + 1,
                            steps: rng.random_range(12..24),
                        });
                    }
                }
            }
        }
    }

    // Isolated bright speckles inside the lung air.
    if cfg.air_speckle_density > 0.0 {
        let lung_voxels: Vec<usize> = lung.set_indices().collect();
        let n = (lung_voxels.len() as f64 * cfg.air_speckle_density) as usize;
        for _ in 0..n {
            let idx = lung_voxels[rng.random_range(0..lung_voxels.len())];
            hu[idx] = rng.random_range(-550.0..-250.0f32);
        }
    }

    // Per-voxel noise, then a soft blur for partial-volume edges, then a
    // low-frequency intensity drift inside the lung.
    for v in hu.iter_mut() {
        *v += (gaussian(&mut rng) * cfg.noise_hu) as f32;
    }
    let raw = Volume3::new_raw(dims, spacing, hu)?;
    let blurred = morphkit::gaussian_filter(&raw, 0.45)?;
    let drift_noise: Vec<f32> = (0..dims.len()).map(|_| rng.random_range(-1.0..1.0f32)).collect();
    let drift = morphkit::gaussian_filter(&Volume3::new_raw(dims, spacing, drift_noise)?, 6.0)?;
    let mut data = blurred.data().to_vec();
    for (idx, v) in data.iter_mut().enumerate() {
        if lung.get_idx(idx) {
            *v += drift.data()[idx] * 60.0;
        }
    }

    // Fringe artifacts: the delivered mask occasionally bulges past the true
    // lung, picking up bright body voxels on the shell.
    let mut delivered = lung.clone();
    let ring = morphkit::dilate(&lung, StructElem::cube(1)?, 1).minus(&lung)?;
    let ring_voxels: Vec<usize> = ring.set_indices().collect();
    for _ in 0..2 {
        if !ring_voxels.is_empty() && rng.random_bool(cfg.fringe_probability) {
            let center = ring_voxels[rng.random_range(0..ring_voxels.len())];
            let (z, y, x) = dims.coords(center);
            let r = rng.random_range(2.0..4.5);
            let ball = morphkit::voxelize_ellipsoid(
                [r; 3],
                &Rotation3::identity(),
                [x as f64, y as f64, z as f64],
                dims,
            );
            let fringe = ball.and(&ring)?;
            delivered = delivered.or(&fringe)?;
        }
    }

    Ok((Volume3::new_raw(dims, spacing, data)?, delivered))
}

fn random_unit(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n2: f64 = v.iter().map(|a| a * a).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn normalize(v: &mut [f64; 3]) {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n > 1e-12 {
        for c in v.iter_mut() {
            *c /= n;
        }
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Stamp a ball of `value`, restricted to the lung.
fn stamp_ball(hu: &mut [f32], lung: &Mask3, dims: Dims3, center: [f64; 3], radius: f64, value: f32) {
    let r = radius.max(0.5);
    let lo = |c: f64| (c - r).floor().max(0.0) as usize;
    let hi = |c: f64, n: usize| ((c + r).ceil() as usize).min(n - 1);
    for z in lo(center[0])..=hi(center[0], dims.d) {
        for y in lo(center[1])..=hi(center[1], dims.h) {
            for x in lo(center[2])..=hi(center[2], dims.w) {
                let dz = z as f64 - center[0];
                let dy = y as f64 - center[1];
                let dx = x as f64 - center[2];
                if dz * dz + dy * dy + dx * dx <= r * r {
                    let idx = dims.index(z, y, x);
                    if lung.get_idx(idx) {
                        hu[idx] = value;
                    }
                }
            }
        }
    }
}
