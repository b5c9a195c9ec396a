//! From-scratch 3D image-processing kernels.
//!
//! All filters accumulate in f64 and store f32. Borders reflect for the
//! intensity filters (half-sample symmetric, so index -1 maps to 0); the
//! binary morphology treats everything outside the volume as background.
//! Every operation is pure and deterministic.

use rand::Rng;

use crate::seeds;
use crate::vol3::{Dims3, Mask3, Volume3};
use crate::{Error, Result};

/// Odd-length separable filter weights.
#[derive(Clone, Debug)]
pub struct Kernel1D {
    radius: usize,
    taps: Vec<f64>,
}

impl Kernel1D {
    /// Normalized Gaussian truncated at radius `ceil(3 sigma)`.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(Error::param(format!("sigma must be positive, got {sigma}")));
        }
        let radius = (3.0 * sigma).ceil() as usize;
        let mut taps: Vec<f64> = (-(radius as i64)..=radius as i64)
            .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let sum: f64 = taps.iter().sum();
        for t in &mut taps {
            *t /= sum;
        }
        Ok(Kernel1D { radius, taps })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

/// Cubic structuring element of half-width `radius` (3x3x3 when radius = 1).
#[derive(Clone, Copy, Debug)]
pub struct StructElem {
    pub radius: usize,
}

impl StructElem {
    pub fn cube(radius: usize) -> Result<Self> {
        if radius < 1 {
            return Err(Error::param("structuring element radius must be >= 1"));
        }
        Ok(StructElem { radius })
    }
}

/// Voxel adjacency for component analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> Vec<(i64, i64, i64)> {
        match self {
            Connectivity::Six => vec![
                (-1, 0, 0),
                (1, 0, 0),
                (0, -1, 0),
                (0, 1, 0),
                (0, 0, -1),
                (0, 0, 1),
            ],
            Connectivity::TwentySix => {
                let mut out = Vec::with_capacity(26);
                for dz in -1..=1i64 {
                    for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            if (dz, dy, dx) != (0, 0, 0) {
                                out.push((dz, dy, dx));
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

/// One maximal connected set of voxels; `voxels` holds ascending linear
/// indices, so `voxels[0]` is the component's minimum index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub voxels: Vec<usize>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn min_index(&self) -> usize {
        self.voxels[0]
    }

    pub fn to_mask(&self, dims: Dims3) -> Result<Mask3> {
        Mask3::from_indices(dims, &self.voxels)
    }
}

/// Fold an index into `[0, n)` by half-sample reflection.
#[inline]
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

/// Line starts and (length, stride) for iterating lines along one axis.
fn axis_lines(dims: Dims3, axis: usize) -> (usize, usize, Vec<usize>) {
    let Dims3 { d, h, w } = dims;
    match axis {
        0 => {
            let mut starts = Vec::with_capacity(h * w);
            for y in 0..h {
                for x in 0..w {
                    starts.push(y * w + x);
                }
            }
            (d, h * w, starts)
        }
        1 => {
            let mut starts = Vec::with_capacity(d * w);
            for z in 0..d {
                for x in 0..w {
                    starts.push(z * h * w + x);
                }
            }
            (h, w, starts)
        }
        _ => {
            let mut starts = Vec::with_capacity(d * h);
            for z in 0..d {
                for y in 0..h {
                    starts.push((z * h + y) * w);
                }
            }
            (w, 1, starts)
        }
    }
}

/// Convolve every line along `axis` with `taps`, reflecting at the borders.
fn convolve_axis(data: &[f64], dims: Dims3, axis: usize, taps: &[f64], radius: usize) -> Vec<f64> {
    let (len, stride, starts) = axis_lines(dims, axis);
    let mut out = vec![0.0f64; data.len()];
    let mut line = vec![0.0f64; len];
    let n = len as i64;
    for start in starts {
        for (i, v) in line.iter_mut().enumerate() {
            *v = data[start + i * stride];
        }
        for i in 0..len {
            let mut acc = 0.0f64;
            for (k, &t) in taps.iter().enumerate() {
                let j = i as i64 + k as i64 - radius as i64;
                acc += t * line[reflect(j, n)];
            }
            out[start + i * stride] = acc;
        }
    }
    out
}

fn to_f64(v: &Volume3) -> Vec<f64> {
    v.data().iter().map(|&x| x as f64).collect()
}

fn from_f64(v: &Volume3, data: Vec<f64>) -> Volume3 {
    // Filters with non-negative normalized taps keep values inside the input
    // range up to rounding; clamp away the rounding so the range contract and
    // the windowed marker stay honest.
    let lo = v.min_value() as f64;
    let hi = v.max_value() as f64;
    let out: Vec<f32> = data.into_iter().map(|x| x.clamp(lo, hi) as f32).collect();
    v.with_data(out, v.windowed())
}

/// Separable Gaussian smoothing with reflected borders.
pub fn gaussian_filter(v: &Volume3, sigma: f64) -> Result<Volume3> {
    let kernel = Kernel1D::gaussian(sigma)?;
    let mut data = to_f64(v);
    for axis in 0..3 {
        data = convolve_axis(&data, v.dims(), axis, kernel.taps(), kernel.radius());
    }
    Ok(from_f64(v, data))
}

/// Cubic mean filter of odd size `k` with reflected borders.
///
/// Implemented as separable sums with a single division by `k`³, so on 0/1
/// fields the result is exactly `count / k³`.
pub fn mean_filter(v: &Volume3, k: usize) -> Result<Volume3> {
    let taps = box_taps(k)?;
    let radius = k / 2;
    let mut data = to_f64(v);
    for axis in 0..3 {
        data = convolve_axis(&data, v.dims(), axis, &taps, radius);
    }
    let norm = (k * k * k) as f64;
    for x in &mut data {
        *x /= norm;
    }
    Ok(from_f64(v, data))
}

/// Per-slice 2D mean filter (k x k in-plane), for the ablation that smooths
/// slices independently.
pub fn mean_filter_per_slice(v: &Volume3, k: usize) -> Result<Volume3> {
    let taps = box_taps(k)?;
    let radius = k / 2;
    let mut data = to_f64(v);
    for axis in 1..3 {
        data = convolve_axis(&data, v.dims(), axis, &taps, radius);
    }
    let norm = (k * k) as f64;
    for x in &mut data {
        *x /= norm;
    }
    Ok(from_f64(v, data))
}

fn box_taps(k: usize) -> Result<Vec<f64>> {
    if k % 2 == 0 || k == 0 {
        return Err(Error::param(format!("kernel size must be odd, got {k}")));
    }
    Ok(vec![1.0; k])
}

fn dilate_axis(bits: &[bool], dims: Dims3, axis: usize, radius: usize) -> Vec<bool> {
    let (len, stride, starts) = axis_lines(dims, axis);
    let mut out = vec![false; bits.len()];
    for start in starts {
        for i in 0..len {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(len - 1);
            let mut any = false;
            for j in lo..=hi {
                if bits[start + j * stride] {
                    any = true;
                    break;
                }
            }
            out[start + i * stride] = any;
        }
    }
    out
}

fn erode_axis(bits: &[bool], dims: Dims3, axis: usize, radius: usize) -> Vec<bool> {
    let (len, stride, starts) = axis_lines(dims, axis);
    let mut out = vec![false; bits.len()];
    for start in starts {
        for i in 0..len {
            // Outside the volume counts as background, so a window that
            // sticks out erodes the voxel away.
            if i < radius || i + radius >= len {
                continue;
            }
            let mut all = true;
            for j in i - radius..=i + radius {
                if !bits[start + j * stride] {
                    all = false;
                    break;
                }
            }
            out[start + i * stride] = all;
        }
    }
    out
}

/// Iterated Minkowski dilation by a cube; `iterations = 0` is the identity.
pub fn dilate(m: &Mask3, se: StructElem, iterations: usize) -> Mask3 {
    let mut bits = m.bits().to_vec();
    for _ in 0..iterations {
        for axis in 0..3 {
            bits = dilate_axis(&bits, m.dims(), axis, se.radius);
        }
    }
    Mask3::from_bits(m.dims(), bits).expect("dims preserved")
}

/// Iterated erosion by a cube, treating outside the volume as background.
pub fn erode(m: &Mask3, se: StructElem, iterations: usize) -> Mask3 {
    let mut bits = m.bits().to_vec();
    for _ in 0..iterations {
        for axis in 0..3 {
            bits = erode_axis(&bits, m.dims(), axis, se.radius);
        }
    }
    Mask3::from_bits(m.dims(), bits).expect("dims preserved")
}

/// Partition the set voxels into maximal connected components, ordered by
/// ascending minimum linear index.
pub fn connected_components(m: &Mask3, connectivity: Connectivity) -> Vec<Component> {
    let dims = m.dims();
    let offsets = connectivity.offsets();
    let mut visited = vec![false; dims.len()];
    let mut components = Vec::new();
    let mut queue = Vec::new();
    for idx in 0..dims.len() {
        if !m.get_idx(idx) || visited[idx] {
            continue;
        }
        let mut voxels = Vec::new();
        visited[idx] = true;
        queue.push(idx);
        while let Some(cur) = queue.pop() {
            voxels.push(cur);
            let (z, y, x) = dims.coords(cur);
            for &(dz, dy, dx) in &offsets {
                let (nz, ny, nx) = (z as i64 + dz, y as i64 + dy, x as i64 + dx);
                if !dims.in_bounds(nz, ny, nx) {
                    continue;
                }
                let nidx = dims.index(nz as usize, ny as usize, nx as usize);
                if m.get_idx(nidx) && !visited[nidx] {
                    visited[nidx] = true;
                    queue.push(nidx);
                }
            }
        }
        voxels.sort_unstable();
        components.push(Component { voxels });
    }
    components
}

/// 3D rotation acting on `[x, y, z]` column vectors.
#[derive(Clone, Copy, Debug)]
pub struct Rotation3 {
    m: [[f64; 3]; 3],
}

impl Rotation3 {
    pub fn identity() -> Self {
        Rotation3 { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    /// Build from a quaternion; normalizes internally.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        Rotation3 {
            m: [
                [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
                [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
                [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
            ],
        }
    }

    /// Rodrigues rotation about `axis` (xyz, need not be unit) by `angle` radians.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (half_sin, half_cos) = ((angle / 2.0).sin(), (angle / 2.0).cos());
        Self::from_quaternion(
            half_cos,
            axis[0] / n * half_sin,
            axis[1] / n * half_sin,
            axis[2] / n * half_sin,
        )
    }

    /// Uniformly random rotation via a normalized 4-vector of Gaussians.
    pub fn random_uniform(rng: &mut impl Rng) -> Self {
        let mut normals = [0.0f64; 4];
        for pair in normals.chunks_mut(2) {
            let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            pair[0] = r * theta.cos();
            if pair.len() > 1 {
                pair[1] = r * theta.sin();
            }
        }
        Self::from_quaternion(normals[0], normals[1], normals[2], normals[3])
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// Inverse rotation (transpose).
    pub fn inverse(&self) -> Self {
        let m = &self.m;
        Rotation3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }
}

/// Voxelize a rotated ellipsoid, clipped at the volume borders.
///
/// `semi_axes` are the lengths along the ellipsoid's local x, y, z axes and
/// `center` is in grid coordinates ordered `[x, y, z]` (note: `Dims3` orders
/// dims as depth, height, width = z, y, x). A voxel is set when its center
/// lies inside the ellipsoid.
pub fn voxelize_ellipsoid(
    semi_axes: [f64; 3],
    rotation: &Rotation3,
    center: [f64; 3],
    dims: Dims3,
) -> Mask3 {
    debug_assert!(semi_axes.iter().all(|a| *a > 0.0));
    let inv = rotation.inverse();
    let r_max = semi_axes.iter().cloned().fold(0.0f64, f64::max);
    let lo = |c: f64, n: usize| ((c - r_max).floor().max(0.0) as usize).min(n.saturating_sub(1));
    let hi = |c: f64, n: usize| ((c + r_max).ceil().max(0.0) as usize).min(n.saturating_sub(1));
    let (x0, x1) = (lo(center[0], dims.w), hi(center[0], dims.w));
    let (y0, y1) = (lo(center[1], dims.h), hi(center[1], dims.h));
    let (z0, z1) = (lo(center[2], dims.d), hi(center[2], dims.d));
    let mut mask = Mask3::empty(dims);
    for z in z0..=z1 {
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = [x as f64 - center[0], y as f64 - center[1], z as f64 - center[2]];
                let q = inv.apply(p);
                let s = (q[0] / semi_axes[0]).powi(2)
                    + (q[1] / semi_axes[1]).powi(2)
                    + (q[2] / semi_axes[2]).powi(2);
                if s <= 1.0 {
                    mask.set_idx(dims.index(z, y, x), true);
                }
            }
        }
    }
    mask
}

/// Random smooth warp of a mask.
///
/// A displacement is drawn per coarse grid node from `U[-magnitude,
/// magnitude]`³, tri-linearly interpolated to voxels, and the mask is pulled
/// back with nearest-neighbor sampling. Deterministic for a fixed seed.
pub fn elastic_deform(m: &Mask3, grid_spacing: usize, magnitude: f64, seed: u64) -> Result<Mask3> {
    if grid_spacing < 2 {
        return Err(Error::param("elastic grid_spacing must be >= 2"));
    }
    if magnitude < 0.0 || !magnitude.is_finite() {
        return Err(Error::param("elastic magnitude must be >= 0"));
    }
    let dims = m.dims();
    let gs = grid_spacing as f64;
    let cells = |n: usize| ((n - 1).div_ceil(grid_spacing)).max(1);
    let (cd, ch, cw) = (cells(dims.d), cells(dims.h), cells(dims.w));
    let (nd, nh, nw) = (cd + 1, ch + 1, cw + 1);

    let mut rng = seeds::rng_from(seed);
    let mut disp = vec![[0.0f64; 3]; nd * nh * nw];
    for node in disp.iter_mut() {
        for comp in node.iter_mut() {
            *comp = rng.random_range(-magnitude..=magnitude);
        }
    }
    let node_at = |z: usize, y: usize, x: usize| disp[(z * nh + y) * nw + x];

    let mut out = Mask3::empty(dims);
    for z in 0..dims.d {
        for y in 0..dims.h {
            for x in 0..dims.w {
                let (fz, fy, fx) = (z as f64 / gs, y as f64 / gs, x as f64 / gs);
                let (iz, iy, ix) = (
                    (fz.floor() as usize).min(cd - 1),
                    (fy.floor() as usize).min(ch - 1),
                    (fx.floor() as usize).min(cw - 1),
                );
                let (tz, ty, tx) = (fz - iz as f64, fy - iy as f64, fx - ix as f64);
                let mut d = [0.0f64; 3];
                for (dz, wz) in [(0usize, 1.0 - tz), (1, tz)] {
                    for (dy, wy) in [(0usize, 1.0 - ty), (1, ty)] {
                        for (dx, wx) in [(0usize, 1.0 - tx), (1, tx)] {
                            let nodev = node_at(iz + dz, iy + dy, ix + dx);
                            let wgt = wz * wy * wx;
                            for c in 0..3 {
                                d[c] += wgt * nodev[c];
                            }
                        }
                    }
                }
                let (sz, sy, sx) = (
                    (z as f64 + d[0]).round() as i64,
                    (y as f64 + d[1]).round() as i64,
                    (x as f64 + d[2]).round() as i64,
                );
                if dims.in_bounds(sz, sy, sx)
                    && m.get(sz as usize, sy as usize, sx as usize)
                {
                    out.set_idx(dims.index(z, y, x), true);
                }
            }
        }
    }
    Ok(out)
}
