//! Label-free segmentation of lung CT lesions at desk scale.
//!
//! The pipeline mirrors a voxel-level anomaly-modeling approach: synthesize
//! diverse fake lesions inside healthy lung volumes, train a small 3D
//! segmentation network to recognize the healthy tissue that remains, and at
//! inference treat whatever the ensemble refuses to call healthy as lesion,
//! followed by a smoothing/growing post-processing stage.
//!
//! Modules follow the data path:
//!
//! * [`vol3`] — dense volumes, binary masks, HU windowing, VOL3 file I/O
//! * [`morphkit`] — Gaussian/mean filters, dilation, connected components,
//!   ellipsoid voxelization, elastic deformation
//! * [`lunglab`] — thorax preparation and erroneous-edge removal
//! * [`lesionforge`] — the synthetic lesion generator and training pairs
//! * [`normnet`] — the miniature normalcy-recognizing network and ensemble
//! * [`postseg`] — healthy-mask to lesion-prediction post-processing
//! * [`evalkit`] — DSC/PSC/SEN, bright-voxel classification metrics, reports
//! * [`phantom`] — procedural healthy-lung phantoms for demos and benchmarks

pub mod evalkit;
pub mod lesionforge;
pub mod lunglab;
pub mod morphkit;
pub mod normnet;
pub mod phantom;
pub mod postseg;
pub mod seeds;
pub mod vol3;

mod error;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
