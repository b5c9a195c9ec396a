//! Dense, from-the-definition reference implementations.

use normseg_core::vol3::{Mask3, Volume3};

/// Half-sample reflection of an index into `[0, n)`.
fn reflect(mut i: i64, n: i64) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Gaussian taps computed straight from the density, truncated at
/// `ceil(3 sigma)` and renormalized.
pub fn gaussian_taps(sigma: f64) -> (usize, Vec<f64>) {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut taps: Vec<f64> = (-(radius as i64)..=radius as i64)
        .map(|i| (-(i as f64 * i as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    (radius, taps)
}

/// Dense (non-separable) 3D Gaussian convolution with reflected borders.
pub fn dense_gaussian(v: &Volume3, sigma: f64) -> Vec<f64> {
    let (radius, taps) = gaussian_taps(sigma);
    let dims = v.dims();
    let r = radius as i64;
    let mut out = vec![0.0f64; dims.len()];
    for z in 0..dims.d {
        for y in 0..dims.h {
            for x in 0..dims.w {
                let mut acc = 0.0f64;
                for dz in -r..=r {
                    let wz = taps[(dz + r) as usize];
                    let sz = reflect(z as i64 + dz, dims.d as i64);
                    for dy in -r..=r {
                        let wy = taps[(dy + r) as usize];
                        let sy = reflect(y as i64 + dy, dims.h as i64);
                        for dx in -r..=r {
                            let wx = taps[(dx + r) as usize];
                            let sx = reflect(x as i64 + dx, dims.w as i64);
                            acc += wz * wy * wx * v.at(sz, sy, sx) as f64;
                        }
                    }
                }
                out[dims.index(z, y, x)] = acc;
            }
        }
    }
    out
}

/// Dense cubic mean filter with reflected borders: sum of k^3 reflected
/// samples divided once by k^3.
pub fn dense_mean(v: &Volume3, k: usize) -> Vec<f64> {
    assert!(k % 2 == 1);
    let dims = v.dims();
    let r = (k / 2) as i64;
    let norm = (k * k * k) as f64;
    let mut out = vec![0.0f64; dims.len()];
    for z in 0..dims.d {
        for y in 0..dims.h {
            for x in 0..dims.w {
                let mut acc = 0.0f64;
                for dz in -r..=r {
                    let sz = reflect(z as i64 + dz, dims.d as i64);
                    for dy in -r..=r {
                        let sy = reflect(y as i64 + dy, dims.h as i64);
                        for dx in -r..=r {
                            let sx = reflect(x as i64 + dx, dims.w as i64);
                            acc += v.at(sz, sy, sx) as f64;
                        }
                    }
                }
                out[dims.index(z, y, x)] = acc / norm;
            }
        }
    }
    out
}

/// Brute-force cubic dilation: a voxel is set when any input voxel lies in
/// its (2r+1)^3 neighborhood; iterated.
pub fn brute_dilate(m: &Mask3, radius: usize, iterations: usize) -> Mask3 {
    let dims = m.dims();
    let r = radius as i64;
    let mut cur = m.clone();
    for _ in 0..iterations {
        let mut next = Mask3::empty(dims);
        for z in 0..dims.d {
            for y in 0..dims.h {
                'voxel: for x in 0..dims.w {
                    for dz in -r..=r {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let (sz, sy, sx) = (z as i64 + dz, y as i64 + dy, x as i64 + dx);
                                if dims.in_bounds(sz, sy, sx)
                                    && cur.get(sz as usize, sy as usize, sx as usize)
                                {
                                    next.set_idx(dims.index(z, y, x), true);
                                    continue 'voxel;
                                }
                            }
                        }
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

/// Flood-fill partition of the set voxels; each component is an ascending
/// index list, components ordered by minimum index.
pub fn flood_fill_components(m: &Mask3, twenty_six: bool) -> Vec<Vec<usize>> {
    let dims = m.dims();
    let mut offsets: Vec<(i64, i64, i64)> = Vec::new();
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                if (dz, dy, dx) == (0, 0, 0) {
                    continue;
                }
                if twenty_six || dz.abs() + dy.abs() + dx.abs() == 1 {
                    offsets.push((dz, dy, dx));
                }
            }
        }
    }
    let mut seen = vec![false; dims.len()];
    let mut out = Vec::new();
    for start in 0..dims.len() {
        if !m.get_idx(start) || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut frontier = vec![start];
        seen[start] = true;
        while let Some(idx) = frontier.pop() {
            comp.push(idx);
            let (z, y, x) = dims.coords(idx);
            for &(dz, dy, dx) in &offsets {
                let (nz, ny, nx) = (z as i64 + dz, y as i64 + dy, x as i64 + dx);
                if dims.in_bounds(nz, ny, nx) {
                    let n = dims.index(nz as usize, ny as usize, nx as usize);
                    if m.get_idx(n) && !seen[n] {
                        seen[n] = true;
                        frontier.push(n);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Smooth-threshold oracle: dense box average of the 0/1 field, keep
/// strictly above `t`.
pub fn brute_smooth_threshold(m: &Mask3, k: usize, t: f64) -> Mask3 {
    let field: Vec<f32> = m.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let vol = Volume3::new_windowed(m.dims(), [1.0, 1.0, 1.0], field).unwrap();
    let mean = dense_mean(&vol, k);
    Mask3::from_bits(m.dims(), mean.iter().map(|&v| v > t).collect()).unwrap()
}

/// O(n^2) AUC: fraction of (positive, negative) pairs ordered correctly,
/// ties counting one half.
pub fn pair_counting_auc(positive: &[f64], negative: &[f64]) -> Option<f64> {
    if positive.is_empty() || negative.is_empty() {
        return None;
    }
    let mut score = 0.0f64;
    for &p in positive {
        for &n in negative {
            if p > n {
                score += 1.0;
            } else if p == n {
                score += 0.5;
            }
        }
    }
    Some(score / (positive.len() as f64 * negative.len() as f64))
}

/// Integer-lattice count of points inside a centered axis-aligned ellipsoid,
/// for voxelization cross-checks.
pub fn lattice_ellipsoid_count(semi: [f64; 3]) -> usize {
    let r = semi.iter().cloned().fold(0.0f64, f64::max).ceil() as i64;
    let mut count = 0usize;
    for z in -r..=r {
        for y in -r..=r {
            for x in -r..=r {
                let s = (x as f64 / semi[0]).powi(2)
                    + (y as f64 / semi[1]).powi(2)
                    + (z as f64 / semi[2]).powi(2);
                if s <= 1.0 {
                    count += 1;
                }
            }
        }
    }
    count
}
