//! Synthetic lesion generator.
//!
//! Shapes: sample small/medium ellipsoid counts scaled by the lung-size
//! factor lambda, deform and rotate each ellipsoid, drop them at random lung
//! voxels, and merge the union into non-adjacent blobs. Textures: fill each
//! blob's bounding box with salt noise whose per-voxel probability is itself
//! a smoothed, rescaled noise field, Gaussian-filter it, and scale to a
//! target mean brightness. Compositing takes the voxelwise maximum with the
//! thorax, so lesions only ever brighten the volume.

use rand::Rng;
use serde::Deserialize;

use crate::lunglab::ThoraxCase;
use crate::morphkit::{self, Component, Connectivity, Rotation3};
use crate::vol3::{self, Dims3, Mask3, Volume3};
use crate::{Error, Result};

/// Texture parameters pinned by the fixed-salt-noise ablation.
#[derive(Clone, Copy, Debug, Deserialize)]
pub struct FixedTexture {
    pub sigma_b: f64,
    pub mu0: f64,
}

/// Every sampled hyperparameter of the generator. Defaults match the
/// reference pipeline's full-scale settings; desk-scale runs shrink the axis
/// ranges through their config files.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Reference lung volume |M_max| that normalizes lambda.
    pub ref_mask_volume: usize,
    /// Count law bounds for small ellipsoids, scaled by lambda.
    pub small_count_range: (f64, f64),
    /// Count law bounds for medium ellipsoids, scaled by lambda.
    pub medium_count_range: (f64, f64),
    pub small_axes: (f64, f64),
    pub medium_axes: (f64, f64),
    pub large_axes: (f64, f64),
    /// One large ellipsoid appears with probability `p_large_base * lambda`.
    pub p_large_base: f64,
    pub sigma_a_range: (f64, f64),
    pub sigma_b_narrow: (f64, f64),
    pub sigma_b_wide: (f64, f64),
    pub sigma_b_narrow_weight: f64,
    /// Both probability-field bounds draw from this range...
    pub a_bound_range: (f64, f64),
    /// ...and are redrawn until upper - lower exceeds this gap.
    pub a_min_gap: f64,
    pub mu0_range: (f64, f64),
    /// Threshold for the texture-mean normalization (values strictly above
    /// it enter the mean).
    pub mean_threshold: f64,
    pub elastic_grid_spacing: usize,
    pub elastic_magnitude: f64,
    pub deform_enabled: bool,
    pub rotate_enabled: bool,
    /// Ablation: exactly 5 spheres of radius 12, no deformation or rotation.
    pub fixed_shapes: bool,
    /// Ablation: constant probability field.
    pub fixed_a: Option<f64>,
    /// Ablation: pinned texture smoothing and brightness.
    pub fixed_b: Option<FixedTexture>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            ref_mask_volume: 1_000_000,
            small_count_range: (5.0, 10.0),
            medium_count_range: (5.0, 10.0),
            small_axes: (3.0, 10.0),
            medium_axes: (10.0, 32.0),
            large_axes: (32.0, 64.0),
            p_large_base: 0.2,
            sigma_a_range: (3.0, 15.0),
            sigma_b_narrow: (0.8, 2.0),
            sigma_b_wide: (2.0, 5.0),
            sigma_b_narrow_weight: 0.7,
            a_bound_range: (0.0, 0.3),
            a_min_gap: 0.15,
            mu0_range: (0.4, 0.8),
            mean_threshold: 0.2,
            elastic_grid_spacing: 8,
            elastic_magnitude: 3.0,
            deform_enabled: true,
            rotate_enabled: true,
            fixed_shapes: false,
            fixed_a: None,
            fixed_b: None,
        }
    }
}

fn check_range(name: &str, r: (f64, f64)) -> Result<()> {
    if !(r.0.is_finite() && r.1.is_finite()) || r.0 > r.1 {
        return Err(Error::config(format!("{name}: invalid range {r:?}")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ref_mask_volume == 0 {
            return Err(Error::config("ref_mask_volume must be positive"));
        }
        check_range("small_count_range", self.small_count_range)?;
        check_range("medium_count_range", self.medium_count_range)?;
        check_range("small_axes", self.small_axes)?;
        check_range("medium_axes", self.medium_axes)?;
        check_range("large_axes", self.large_axes)?;
        check_range("sigma_a_range", self.sigma_a_range)?;
        check_range("sigma_b_narrow", self.sigma_b_narrow)?;
        check_range("sigma_b_wide", self.sigma_b_wide)?;
        check_range("a_bound_range", self.a_bound_range)?;
        check_range("mu0_range", self.mu0_range)?;
        if self.small_axes.0 <= 0.0 || self.medium_axes.0 <= 0.0 || self.large_axes.0 <= 0.0 {
            return Err(Error::config("semi-axis ranges must be positive"));
        }
        if self.sigma_a_range.0 <= 0.0 || self.sigma_b_narrow.0 <= 0.0 || self.sigma_b_wide.0 <= 0.0 {
            return Err(Error::config("sigma ranges must be positive"));
        }
        for p in [self.p_large_base, self.sigma_b_narrow_weight] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("probability {p} outside [0,1]")));
            }
        }
        if self.a_min_gap <= 0.0 || self.a_min_gap >= self.a_bound_range.1 - self.a_bound_range.0 {
            return Err(Error::config(
                "a_min_gap must be positive and below the width of a_bound_range",
            ));
        }
        if !(0.0..1.0).contains(&self.mean_threshold) {
            return Err(Error::config("mean_threshold must lie in [0,1)"));
        }
        if self.elastic_grid_spacing < 2 {
            return Err(Error::config("elastic_grid_spacing must be >= 2"));
        }
        if self.elastic_magnitude < 0.0 {
            return Err(Error::config("elastic_magnitude must be >= 0"));
        }
        if let Some(a) = self.fixed_a {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::config("fixed_a must lie in [0,1]"));
            }
        }
        if let Some(fb) = self.fixed_b {
            if fb.sigma_b <= 0.0 || !(0.0..=1.0).contains(&fb.mu0) {
                return Err(Error::config("fixed_b needs sigma_b > 0 and mu0 in [0,1]"));
            }
        }
        Ok(())
    }

    /// Discrete count scaled by lambda: uniform on
    /// `ceil(lo*lambda) ..= floor(hi*lambda)`, or 0 when the range is empty.
    pub fn sample_count(&self, range: (f64, f64), lambda: f64, rng: &mut impl Rng) -> usize {
        let lo = (range.0 * lambda).ceil() as i64;
        let hi = (range.1 * lambda).floor() as i64;
        if hi < lo || hi < 0 {
            return 0;
        }
        let lo = lo.max(0);
        rng.random_range(lo..=hi) as usize
    }

    pub fn sample_large(&self, lambda: f64, rng: &mut impl Rng) -> bool {
        rng.random_bool((self.p_large_base * lambda).clamp(0.0, 1.0))
    }

    pub fn sample_sigma_a(&self, rng: &mut impl Rng) -> f64 {
        rng.random_range(self.sigma_a_range.0..=self.sigma_a_range.1)
    }

    /// Mixture draw: the narrow branch with its weight, else the wide one.
    pub fn sample_sigma_b(&self, rng: &mut impl Rng) -> f64 {
        if rng.random_bool(self.sigma_b_narrow_weight) {
            rng.random_range(self.sigma_b_narrow.0..=self.sigma_b_narrow.1)
        } else {
            rng.random_range(self.sigma_b_wide.0..=self.sigma_b_wide.1)
        }
    }

    pub fn sample_mu0(&self, rng: &mut impl Rng) -> f64 {
        rng.random_range(self.mu0_range.0..=self.mu0_range.1)
    }

    /// Rejection-sample `(lower, upper)` from the bound range until
    /// `upper - lower` exceeds the minimum gap.
    pub fn sample_a_bounds(&self, rng: &mut impl Rng) -> (f64, f64) {
        let (lo, hi) = self.a_bound_range;
        loop {
            let upper = rng.random_range(lo..=hi);
            let lower = rng.random_range(lo..=hi);
            if upper - lower > self.a_min_gap {
                return (lower, upper);
            }
        }
    }
}

/// How ground truth is derived from a synthetic pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GtMode {
    /// Healthy tissues: bright voxels outside the lesion shape.
    Tissues,
    /// Healthy regions: all lung voxels outside the lesion shape.
    Regions,
    /// The synthetic lesions themselves.
    Lesions,
}

/// Input volume with injected lesions plus its ground truth.
#[derive(Clone, Debug)]
pub struct TrainPair {
    pub input: Volume3,
    pub gt: Mask3,
    pub lung: Mask3,
    pub lesion_shape: Mask3,
    pub seed: u64,
}

/// Placement record for one sampled ellipsoid.
#[derive(Clone, Debug)]
pub struct EllipsoidMeta {
    /// Semi-axis lengths along local x, y, z.
    pub semi_axes: [f64; 3],
    /// Center voxel in (z, y, x) grid order.
    pub center: (usize, usize, usize),
    pub size_class: &'static str,
}

/// Sampled texture parameters for one blob.
#[derive(Clone, Debug, Default)]
pub struct BlobMeta {
    pub voxels: usize,
    pub sigma_a: f64,
    pub a_lower: f64,
    pub a_upper: f64,
    pub sigma_b: f64,
    pub mu0: f64,
    /// True when texture resampling gave up and emitted a zero patch.
    pub zero_texture: bool,
}

/// Sidecar record of everything sampled for one pair.
#[derive(Clone, Debug, Default)]
pub struct PairMeta {
    pub seed: u64,
    pub lambda: f64,
    pub n_small: usize,
    pub n_medium: usize,
    pub large: bool,
    pub ellipsoids: Vec<EllipsoidMeta>,
    pub blobs: Vec<BlobMeta>,
}

impl PairMeta {
    /// Line-delimited `key = value` rendering for the sidecar file.
    pub fn to_kv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "lambda = {:.6}", self.lambda);
        let _ = writeln!(out, "n_small = {}", self.n_small);
        let _ = writeln!(out, "n_medium = {}", self.n_medium);
        let _ = writeln!(out, "large = {}", self.large);
        for (i, e) in self.ellipsoids.iter().enumerate() {
            let _ = writeln!(
                out,
                "ellipsoid.{i}.semi_axes = {:.4} {:.4} {:.4}",
                e.semi_axes[0], e.semi_axes[1], e.semi_axes[2]
            );
            let _ = writeln!(
                out,
                "ellipsoid.{i}.center = {} {} {}",
                e.center.0, e.center.1, e.center.2
            );
            let _ = writeln!(out, "ellipsoid.{i}.class = {}", e.size_class);
        }
        for (i, b) in self.blobs.iter().enumerate() {
            let _ = writeln!(out, "blob.{i}.voxels = {}", b.voxels);
            let _ = writeln!(out, "blob.{i}.sigma_a = {:.6}", b.sigma_a);
            let _ = writeln!(out, "blob.{i}.a_lower = {:.6}", b.a_lower);
            let _ = writeln!(out, "blob.{i}.a_upper = {:.6}", b.a_upper);
            let _ = writeln!(out, "blob.{i}.sigma_b = {:.6}", b.sigma_b);
            let _ = writeln!(out, "blob.{i}.mu0 = {:.6}", b.mu0);
            let _ = writeln!(out, "blob.{i}.zero_texture = {}", b.zero_texture);
        }
        out
    }
}

/// Lung-size scaling factor: |mask| / |M_max|.
pub fn lambda_factor(mask: &Mask3, cfg: &GeneratorConfig) -> Result<f64> {
    if cfg.ref_mask_volume == 0 {
        return Err(Error::config("ref_mask_volume must be positive"));
    }
    Ok(mask.count() as f64 / cfg.ref_mask_volume as f64)
}

/// Sampled lesion shapes: the blob union and its non-adjacent components.
#[derive(Clone, Debug)]
pub struct ShapeSample {
    pub union: Mask3,
    pub blobs: Vec<Component>,
    pub lambda: f64,
    pub n_small: usize,
    pub n_medium: usize,
    pub large: bool,
    pub ellipsoids: Vec<EllipsoidMeta>,
}

struct EllipsoidDraw {
    semi_axes: [f64; 3],
    rotation: Rotation3,
    center_idx: usize,
    deform_seed: Option<u64>,
    size_class: &'static str,
}

/// Sample ellipsoids per the count laws, deform/rotate/place each one, and
/// merge the union into 26-connected blobs.
pub fn sample_shapes(lung: &Mask3, cfg: &GeneratorConfig, rng: &mut impl Rng) -> Result<ShapeSample> {
    let lambda = lambda_factor(lung, cfg)?;
    let lung_voxels: Vec<usize> = lung.set_indices().collect();
    let dims = lung.dims();
    let mut union = Mask3::empty(dims);
    let mut meta = Vec::new();

    let mut plan: Vec<EllipsoidDraw> = Vec::new();
    let (n_small, n_medium, large);
    if lung_voxels.is_empty() {
        return Ok(ShapeSample {
            union,
            blobs: Vec::new(),
            lambda,
            n_small: 0,
            n_medium: 0,
            large: false,
            ellipsoids: meta,
        });
    }
    if cfg.fixed_shapes {
        n_small = 5;
        n_medium = 0;
        large = false;
        for _ in 0..5 {
            let center_idx = lung_voxels[rng.random_range(0..lung_voxels.len())];
            plan.push(EllipsoidDraw {
                semi_axes: [12.0; 3],
                rotation: Rotation3::identity(),
                center_idx,
                deform_seed: None,
                size_class: "fixed",
            });
        }
    } else {
        n_small = cfg.sample_count(cfg.small_count_range, lambda, rng);
        for _ in 0..n_small {
            plan.push(draw_ellipsoid(cfg, cfg.small_axes, "small", &lung_voxels, rng));
        }
        n_medium = cfg.sample_count(cfg.medium_count_range, lambda, rng);
        for _ in 0..n_medium {
            plan.push(draw_ellipsoid(cfg, cfg.medium_axes, "medium", &lung_voxels, rng));
        }
        large = cfg.sample_large(lambda, rng);
        if large {
            plan.push(draw_ellipsoid(cfg, cfg.large_axes, "large", &lung_voxels, rng));
        }
    }

    for draw in &plan {
        stamp_ellipsoid(&mut union, draw, cfg)?;
        let (cz, cy, cx) = dims.coords(draw.center_idx);
        meta.push(EllipsoidMeta {
            semi_axes: draw.semi_axes,
            center: (cz, cy, cx),
            size_class: draw.size_class,
        });
    }

    let blobs = morphkit::connected_components(&union, Connectivity::TwentySix);
    Ok(ShapeSample { union, blobs, lambda, n_small, n_medium, large, ellipsoids: meta })
}

fn draw_ellipsoid(
    cfg: &GeneratorConfig,
    axes: (f64, f64),
    size_class: &'static str,
    lung_voxels: &[usize],
    rng: &mut impl Rng,
) -> EllipsoidDraw {
    let semi_axes = [
        rng.random_range(axes.0..=axes.1),
        rng.random_range(axes.0..=axes.1),
        rng.random_range(axes.0..=axes.1),
    ];
    let rotation = if cfg.rotate_enabled {
        Rotation3::random_uniform(rng)
    } else {
        Rotation3::identity()
    };
    let center_idx = lung_voxels[rng.random_range(0..lung_voxels.len())];
    let deform_seed = cfg.deform_enabled.then(|| rng.random::<u64>());
    EllipsoidDraw { semi_axes, rotation, center_idx, deform_seed, size_class }
}

/// Voxelize one ellipsoid in a local patch, optionally deform it, and OR it
/// into the union at its center, clipping at the volume borders.
fn stamp_ellipsoid(union: &mut Mask3, draw: &EllipsoidDraw, cfg: &GeneratorConfig) -> Result<()> {
    let dims = union.dims();
    let r_max = draw.semi_axes.iter().cloned().fold(0.0f64, f64::max);
    let margin = if draw.deform_seed.is_some() {
        cfg.elastic_magnitude.ceil() as usize + 1
    } else {
        1
    };
    let half = r_max.ceil() as usize + margin;
    let side = 2 * half + 1;
    let local_dims = Dims3::cube(side);
    let c = half as f64;
    let mut patch = morphkit::voxelize_ellipsoid(draw.semi_axes, &draw.rotation, [c, c, c], local_dims);
    if let Some(seed) = draw.deform_seed {
        patch = morphkit::elastic_deform(&patch, cfg.elastic_grid_spacing, cfg.elastic_magnitude, seed)?;
    }
    let (cz, cy, cx) = dims.coords(draw.center_idx);
    let (oz, oy, ox) = (cz as i64 - half as i64, cy as i64 - half as i64, cx as i64 - half as i64);
    for idx in patch.set_indices() {
        let (lz, ly, lx) = local_dims.coords(idx);
        let (gz, gy, gx) = (oz + lz as i64, oy + ly as i64, ox + lx as i64);
        if dims.in_bounds(gz, gy, gx) {
            union.set_idx(dims.index(gz as usize, gy as usize, gx as usize), true);
        }
    }
    Ok(())
}

/// A spatially varying salt-noise probability field over a bounding box.
#[derive(Clone, Debug)]
pub struct ProbField {
    pub dims: Dims3,
    pub values: Vec<f64>,
    pub sigma_a: f64,
    pub a_lower: f64,
    pub a_upper: f64,
}

/// Smoothed uniform noise rescaled to `[a_lower, a_upper]`; the rescale is
/// exact at the field extremes. A degenerate (constant) smoothed field yields
/// the midpoint.
pub fn sample_probability_field(
    dims: Dims3,
    cfg: &GeneratorConfig,
    rng: &mut impl Rng,
) -> Result<ProbField> {
    if dims.is_empty() {
        return Err(Error::param("probability field needs a nonempty bounding box"));
    }
    if let Some(a) = cfg.fixed_a {
        return Ok(ProbField {
            dims,
            values: vec![a; dims.len()],
            sigma_a: 0.0,
            a_lower: a,
            a_upper: a,
        });
    }
    let sigma_a = cfg.sample_sigma_a(rng);
    let noise: Vec<f32> = (0..dims.len()).map(|_| rng.random_range(0.0..1.0)).collect();
    let raw = Volume3::new_windowed(dims, [1.0; 3], noise)?;
    let smoothed = morphkit::gaussian_filter(&raw, sigma_a)?;
    let (lower, upper) = cfg.sample_a_bounds(rng);

    let lo = smoothed.min_value();
    let hi = smoothed.max_value();
    let values = if hi > lo {
        let span = (hi - lo) as f64;
        smoothed
            .data()
            .iter()
            .map(|&v| {
                let t = (v - lo) as f64 / span;
                ((1.0 - t) * lower + t * upper).clamp(lower, upper)
            })
            .collect()
    } else {
        vec![(lower + upper) / 2.0; dims.len()]
    };
    Ok(ProbField { dims, values, sigma_a, a_lower: lower, a_upper: upper })
}

/// One blob's texture over its bounding box, zero outside the blob.
#[derive(Clone, Debug)]
pub struct TexturePatch {
    /// Bounding-box origin in (z, y, x).
    pub origin: (usize, usize, usize),
    pub dims: Dims3,
    pub values: Vec<f32>,
    pub meta: BlobMeta,
}

const TEXTURE_RESAMPLE_LIMIT: usize = 8;

/// Synthesize a blob's texture: salt noise driven by the probability field,
/// Gaussian smoothing, then scaling to the target mean and clipping.
pub fn sample_texture(
    blob: &Component,
    volume_dims: Dims3,
    cfg: &GeneratorConfig,
    rng: &mut impl Rng,
) -> Result<TexturePatch> {
    if blob.is_empty() {
        return Err(Error::param("texture synthesis needs a nonempty blob"));
    }
    let mut lo = (usize::MAX, usize::MAX, usize::MAX);
    let mut hi = (0usize, 0usize, 0usize);
    for &idx in &blob.voxels {
        let (z, y, x) = volume_dims.coords(idx);
        lo = (lo.0.min(z), lo.1.min(y), lo.2.min(x));
        hi = (hi.0.max(z), hi.1.max(y), hi.2.max(x));
    }
    let dims = Dims3::new(hi.0 - lo.0 + 1, hi.1 - lo.1 + 1, hi.2 - lo.2 + 1);
    let mut membership = vec![false; dims.len()];
    for &idx in &blob.voxels {
        let (z, y, x) = volume_dims.coords(idx);
        membership[dims.index(z - lo.0, y - lo.1, x - lo.2)] = true;
    }

    let field = sample_probability_field(dims, cfg, rng)?;

    let mut last_sigma_b = 0.0;
    let mut last_mu0 = 0.0;
    for _attempt in 0..TEXTURE_RESAMPLE_LIMIT {
        let salt: Vec<f32> = field
            .values
            .iter()
            .map(|&p| if rng.random_bool(p.clamp(0.0, 1.0)) { 1.0f32 } else { 0.0 })
            .collect();
        let (sigma_b, mu0) = match cfg.fixed_b {
            Some(fb) => (fb.sigma_b, fb.mu0),
            None => (cfg.sample_sigma_b(rng), cfg.sample_mu0(rng)),
        };
        last_sigma_b = sigma_b;
        last_mu0 = mu0;
        let salt_vol = Volume3::new_windowed(dims, [1.0; 3], salt)?;
        let smoothed = morphkit::gaussian_filter(&salt_vol, sigma_b)?;

        let Some((_beta, scaled)) = scale_to_target_mean(smoothed.data(), cfg.mean_threshold, mu0)
        else {
            continue;
        };
        let values: Vec<f32> = scaled
            .iter()
            .zip(&membership)
            .map(|(&v, &inside)| if inside { v } else { 0.0 })
            .collect();
        return Ok(TexturePatch {
            origin: lo,
            dims,
            values,
            meta: BlobMeta {
                voxels: blob.len(),
                sigma_a: field.sigma_a,
                a_lower: field.a_lower,
                a_upper: field.a_upper,
                sigma_b,
                mu0,
                zero_texture: false,
            },
        });
    }

    // Nothing ever cleared the mean threshold; a zero patch is inert under
    // max-compositing.
    Ok(TexturePatch {
        origin: lo,
        dims,
        values: vec![0.0; dims.len()],
        meta: BlobMeta {
            voxels: blob.len(),
            sigma_a: field.sigma_a,
            a_lower: field.a_lower,
            a_upper: field.a_upper,
            sigma_b: last_sigma_b,
            mu0: last_mu0,
            zero_texture: true,
        },
    })
}

/// Scale a smoothed texture so the mean of values strictly above the
/// threshold hits `mu0`, then clip to `[0, 1]`. Returns the scale factor and
/// scaled values, or `None` when nothing clears the threshold.
pub fn scale_to_target_mean(values: &[f32], threshold: f64, mu0: f64) -> Option<(f64, Vec<f32>)> {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for &v in values {
        if v as f64 > threshold {
            sum += v as f64;
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    let beta = mu0 / (sum / n as f64);
    let scaled = values.iter().map(|&v| (beta * v as f64).clamp(0.0, 1.0) as f32).collect();
    Some((beta, scaled))
}

/// Voxelwise maximum of the thorax and every placed texture patch.
pub fn composite(thorax: &Volume3, patches: &[TexturePatch]) -> Result<Volume3> {
    let dims = thorax.dims();
    let mut data = thorax.data().to_vec();
    for patch in patches {
        let (oz, oy, ox) = patch.origin;
        if oz + patch.dims.d > dims.d || oy + patch.dims.h > dims.h || ox + patch.dims.w > dims.w {
            return Err(Error::ShapeMismatch(patch.dims, dims));
        }
        for lz in 0..patch.dims.d {
            for ly in 0..patch.dims.h {
                let row = patch.dims.index(lz, ly, 0);
                let out = dims.index(oz + lz, oy + ly, ox);
                for lx in 0..patch.dims.w {
                    let v = patch.values[row + lx];
                    if v > data[out + lx] {
                        data[out + lx] = v;
                    }
                }
            }
        }
    }
    Ok(Volume3::new_windowed(dims, thorax.spacing(), data)?)
}

/// Ground truth per the configured mode.
pub fn make_ground_truth(
    thorax: &Volume3,
    lung: &Mask3,
    shape: &Mask3,
    tau: f64,
    mode: GtMode,
) -> Result<Mask3> {
    match mode {
        GtMode::Tissues => vol3::bright_mask(thorax, tau)?.minus(shape)?.and(lung),
        GtMode::Regions => lung.minus(shape),
        GtMode::Lesions => lung.and(shape),
    }
}

/// Deterministic pair synthesis: shapes, per-blob textures, compositing, and
/// ground truth, all driven by one seeded stream.
pub fn generate_pair(
    case: &ThoraxCase,
    cfg: &GeneratorConfig,
    tau: f64,
    mode: GtMode,
    seed: u64,
) -> Result<(TrainPair, PairMeta)> {
    cfg.validate()?;
    let mut rng = crate::seeds::rng_from(seed);
    let shapes = sample_shapes(&case.clean_lung_mask, cfg, &mut rng)?;
    let mut patches = Vec::with_capacity(shapes.blobs.len());
    for blob in &shapes.blobs {
        patches.push(sample_texture(blob, case.thorax.dims(), cfg, &mut rng)?);
    }
    let input = composite(&case.thorax, &patches)?;
    let gt = make_ground_truth(&case.thorax, &case.clean_lung_mask, &shapes.union, tau, mode)?;
    let meta = PairMeta {
        seed,
        lambda: shapes.lambda,
        n_small: shapes.n_small,
        n_medium: shapes.n_medium,
        large: shapes.large,
        ellipsoids: shapes.ellipsoids,
        blobs: patches.iter().map(|p| p.meta.clone()).collect(),
    };
    let pair = TrainPair {
        input,
        gt,
        lung: case.clean_lung_mask.clone(),
        lesion_shape: shapes.union,
        seed,
    };
    Ok((pair, meta))
}
