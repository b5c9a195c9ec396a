//! Thorax preparation: mask the windowed CT to the lung, find bright
//! components hugging the lung-mask boundary (lung-segmenter edge errors),
//! and strip them before training data is synthesized. The inference path
//! takes masks as-is.

use crate::morphkit::{self, Connectivity, StructElem};
use crate::vol3::{self, Mask3, Volume3};
use crate::{Error, Result};

/// A windowed case with its raw and cleaned lung masks.
#[derive(Clone, Debug)]
pub struct ThoraxCase {
    /// Windowed CT volume.
    pub volume: Volume3,
    /// Lung mask as delivered by the upstream segmenter (M').
    pub raw_lung_mask: Mask3,
    /// Lung mask with erroneous edges removed (M = M' \ E).
    pub clean_lung_mask: Mask3,
    /// The removed edge components (E).
    pub edges: Mask3,
    /// Thorax intensities, volume masked to the clean lung (H).
    pub thorax: Volume3,
}

/// Parameters for erroneous-edge detection. The brightness threshold reuses
/// tau by default; the fraction quantifies "most of the voxels on the edge".
#[derive(Clone, Copy, Debug)]
pub struct EdgeConfig {
    pub tau: f64,
    pub edge_fraction: f64,
    pub shell_thickness: usize,
    pub connectivity: Connectivity,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        EdgeConfig {
            tau: 1.0 / 3.0,
            edge_fraction: 0.5,
            shell_thickness: 1,
            connectivity: Connectivity::TwentySix,
        }
    }
}

/// Voxels of `m` within `thickness` (Chebyshev) of the complement, computed
/// by iterated erosion difference. The volume border counts as outside.
pub fn boundary_shell(m: &Mask3, thickness: usize) -> Result<Mask3> {
    if thickness < 1 {
        return Err(Error::param("shell thickness must be >= 1"));
    }
    let interior = morphkit::erode(m, StructElem::cube(1)?, thickness);
    m.minus(&interior)
}

/// Detect and remove bright components that mostly lie on the lung-mask
/// boundary shell, yielding the cleaned mask and thorax.
pub fn remove_erroneous_edges(
    volume: &Volume3,
    raw_lung_mask: &Mask3,
    cfg: &EdgeConfig,
) -> Result<ThoraxCase> {
    if !volume.windowed() {
        return Err(Error::NotWindowed);
    }
    let raw_thorax = vol3::apply_mask(volume, raw_lung_mask)?;
    let bright = vol3::bright_mask(&raw_thorax, cfg.tau)?.and(raw_lung_mask)?;
    let shell = boundary_shell(raw_lung_mask, cfg.shell_thickness)?;

    let mut edges = Mask3::empty(volume.dims());
    for comp in morphkit::connected_components(&bright, cfg.connectivity) {
        let on_shell = comp.voxels.iter().filter(|&&i| shell.get_idx(i)).count();
        if on_shell as f64 / comp.len() as f64 >= cfg.edge_fraction {
            for &i in &comp.voxels {
                edges.set_idx(i, true);
            }
        }
    }

    let clean = raw_lung_mask.minus(&edges)?;
    let thorax = vol3::apply_mask(volume, &clean)?;
    Ok(ThoraxCase {
        volume: volume.clone(),
        raw_lung_mask: raw_lung_mask.clone(),
        clean_lung_mask: clean,
        edges,
        thorax,
    })
}

/// Inference-path preparation: keep the mask as-is (E empty).
pub fn prepare_as_is(volume: &Volume3, lung_mask: &Mask3) -> Result<ThoraxCase> {
    if !volume.windowed() {
        return Err(Error::NotWindowed);
    }
    let thorax = vol3::apply_mask(volume, lung_mask)?;
    Ok(ThoraxCase {
        volume: volume.clone(),
        raw_lung_mask: lung_mask.clone(),
        clean_lung_mask: lung_mask.clone(),
        edges: Mask3::empty(volume.dims()),
        thorax,
    })
}
