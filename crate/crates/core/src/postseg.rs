//! Post-processing from voted healthy masks to final lesion predictions:
//! subtract the healthy prediction from the lung, smooth and threshold the
//! bright and full-voxel candidate masks, then grow the confident bright
//! cores constrained to the full candidate region.

use serde::Deserialize;

use crate::morphkit::{self, StructElem};
use crate::vol3::{self, Mask3, Volume3};
use crate::{Error, Result};

/// Pipeline variant: the full smoothing + constrained growing, growing
/// disabled (the smoothed bright mask is the prediction), or the smoothed
/// full-voxel mask used directly as the prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostVariant {
    Full,
    NoGrowing,
    GAsPrediction,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessConfig {
    /// Brightness threshold separating air from tissue-range voxels.
    pub tau: f64,
    /// Mean-filter kernel for the bright candidate mask.
    pub k_d: usize,
    /// Mean-filter kernel for the full-voxel candidate mask.
    pub k_f: usize,
    /// Threshold on the smoothed bright mask.
    pub t_d: f64,
    /// Threshold on the smoothed full-voxel mask.
    pub t_f: f64,
    pub dilation_radius: usize,
    pub dilation_iterations: usize,
    pub variant: PostVariant,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            tau: 1.0 / 3.0,
            k_d: 9,
            k_f: 7,
            t_d: 0.2,
            t_f: 0.15,
            dilation_radius: 1,
            dilation_iterations: 3,
            variant: PostVariant::Full,
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_d % 2 == 0 || self.k_f % 2 == 0 {
            return Err(Error::config("post-processing kernels must be odd"));
        }
        if !(0.0..1.0).contains(&self.t_d) || !(0.0..1.0).contains(&self.t_f) || self.t_d <= 0.0 || self.t_f <= 0.0 {
            return Err(Error::config("post-processing thresholds must lie in (0,1)"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("tau must lie in [0,1]"));
        }
        if self.dilation_radius < 1 {
            return Err(Error::config("dilation radius must be >= 1"));
        }
        Ok(())
    }
}

/// Raw lesion candidates: `D` restricted to bright voxels and `F` over all
/// lung voxels not predicted healthy.
pub fn lesion_candidates(
    thorax: &Volume3,
    lung: &Mask3,
    healthy: &Mask3,
    tau: f64,
) -> Result<(Mask3, Mask3)> {
    let healthy_in_lung = healthy.and(lung)?;
    let full = lung.minus(&healthy_in_lung)?;
    let bright = vol3::bright_mask(thorax, tau)?.and(&full)?;
    Ok((bright, full))
}

/// Mean-filter the 0/1 mask with kernel `k`, keep voxels strictly above `t`.
pub fn smooth_threshold(m: &Mask3, k: usize, t: f64) -> Result<Mask3> {
    let field = mask_to_volume(m);
    let smoothed = morphkit::mean_filter(&field, k)?;
    let bits = smoothed.data().iter().map(|&v| v as f64 > t).collect();
    Mask3::from_bits(m.dims(), bits)
}

fn mask_to_volume(m: &Mask3) -> Volume3 {
    let data = m.bits().iter().map(|&b| if b { 1.0f32 } else { 0.0 }).collect();
    Volume3::new_windowed(m.dims(), [1.0, 1.0, 1.0], data).expect("0/1 data is windowed")
}

/// Combine the smoothed masks per the configured variant. In the full
/// variant the bright cores grow by dilation but never past the full-voxel
/// region.
pub fn finalize(smoothed_bright: &Mask3, smoothed_full: &Mask3, cfg: &PostprocessConfig) -> Result<Mask3> {
    match cfg.variant {
        PostVariant::Full => {
            let grown = morphkit::dilate(
                smoothed_bright,
                StructElem::cube(cfg.dilation_radius)?,
                cfg.dilation_iterations,
            );
            grown.and(smoothed_full)
        }
        PostVariant::NoGrowing => Ok(smoothed_bright.clone()),
        PostVariant::GAsPrediction => Ok(smoothed_full.clone()),
    }
}

/// All intermediate masks of the pipeline, for inspection.
#[derive(Clone, Debug)]
pub struct SegmentStages {
    /// Bright lesion candidates (lung minus healthy, bright voxels only).
    pub bright_candidates: Mask3,
    /// Smoothed + thresholded bright candidates.
    pub smoothed_bright: Mask3,
    /// Full-voxel lesion candidates (lung minus healthy).
    pub full_candidates: Mask3,
    /// Smoothed + thresholded full-voxel candidates.
    pub smoothed_full: Mask3,
    /// Final prediction.
    pub prediction: Mask3,
}

pub fn segment_stages(
    thorax: &Volume3,
    lung: &Mask3,
    healthy: &Mask3,
    cfg: &PostprocessConfig,
) -> Result<SegmentStages> {
    cfg.validate()?;
    let (bright, full) = lesion_candidates(thorax, lung, healthy, cfg.tau)?;
    let smoothed_bright = smooth_threshold(&bright, cfg.k_d, cfg.t_d)?;
    let smoothed_full = smooth_threshold(&full, cfg.k_f, cfg.t_f)?;
    // Smoothing can spill past the lung; predictions never leave it.
    let prediction = finalize(&smoothed_bright, &smoothed_full, cfg)?.and(lung)?;
    Ok(SegmentStages {
        bright_candidates: bright,
        smoothed_bright,
        full_candidates: full,
        smoothed_full,
        prediction,
    })
}

/// The composed pipeline: candidates, smoothing, finalize.
pub fn segment(
    thorax: &Volume3,
    lung: &Mask3,
    healthy: &Mask3,
    cfg: &PostprocessConfig,
) -> Result<Mask3> {
    Ok(segment_stages(thorax, lung, healthy, cfg)?.prediction)
}
