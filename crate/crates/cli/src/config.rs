//! Run configuration: a versioned TOML schema with strict unknown-key
//! rejection, plus named preset overlays for the ablation experiments.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use normseg_core::lesionforge::{FixedTexture, GeneratorConfig, GtMode};
use normseg_core::lunglab::EdgeConfig;
use normseg_core::morphkit::Connectivity;
use normseg_core::normnet::NetConfig;
use normseg_core::phantom::PhantomConfig;
use normseg_core::postseg::{PostVariant, PostprocessConfig};

use crate::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub edge: EdgeSection,
    #[serde(default)]
    pub generator: GeneratorConfig,
    /// Generator regime for held-out test lesions; defaults to a mildly
    /// shifted copy of `generator` when absent.
    #[serde(default)]
    pub holdout_generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub post: PostSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub gates: Gates,
    #[serde(default)]
    pub demo: DemoSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub cases_dir: PathBuf,
    pub corpus_dir: PathBuf,
    pub model_dir: PathBuf,
    pub pred_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            cases_dir: "out/cases".into(),
            corpus_dir: "out/corpus".into(),
            model_dir: "out/models".into(),
            pred_dir: "out/preds".into(),
            report_dir: "out/reports".into(),
        }
    }
}

impl Paths {
    /// Rebase every path under one output root.
    pub fn rebase(&mut self, root: &Path) {
        self.cases_dir = root.join("cases");
        self.corpus_dir = root.join("corpus");
        self.model_dir = root.join("models");
        self.pred_dir = root.join("preds");
        self.report_dir = root.join("reports");
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub master_seed: u64,
    /// Brightness threshold in windowed units.
    pub tau: f64,
    pub gt_mode: GtMode,
    pub edge_removal: bool,
    /// HU window [lo, hi] applied to raw input volumes.
    pub hu_window: [f32; 2],
    /// Leading cases from the case directory feed training...
    pub train_cases: usize,
    /// ...and the following ones become held-out test cases.
    pub holdout_cases: usize,
    pub pairs_per_case: usize,
    pub holdout_pairs_per_case: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            master_seed: 42,
            tau: 1.0 / 3.0,
            gt_mode: GtMode::Tissues,
            edge_removal: true,
            hu_window: [-800.0, 100.0],
            train_cases: 12,
            holdout_cases: 16,
            pairs_per_case: 3,
            holdout_pairs_per_case: 1,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeSection {
    pub edge_fraction: f64,
    pub shell_thickness: usize,
    /// 6 or 26.
    pub connectivity: u8,
}

impl Default for EdgeSection {
    fn default() -> Self {
        EdgeSection { edge_fraction: 0.5, shell_thickness: 1, connectivity: 26 }
    }
}

impl EdgeSection {
    pub fn to_core(&self, tau: f64) -> CliResult<EdgeConfig> {
        let connectivity = match self.connectivity {
            6 => Connectivity::Six,
            26 => Connectivity::TwentySix,
            other => {
                return Err(CliError::Config(format!("edge.connectivity must be 6 or 26, got {other}")))
            }
        };
        Ok(EdgeConfig {
            tau,
            edge_fraction: self.edge_fraction,
            shell_thickness: self.shell_thickness,
            connectivity,
        })
    }
}

/// Post-processing knobs; tau comes from the run section.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostSection {
    pub k_d: usize,
    pub k_f: usize,
    pub t_d: f64,
    pub t_f: f64,
    pub dilation_radius: usize,
    pub dilation_iterations: usize,
    pub variant: PostVariant,
}

impl Default for PostSection {
    fn default() -> Self {
        let d = PostprocessConfig::default();
        PostSection {
            k_d: d.k_d,
            k_f: d.k_f,
            t_d: d.t_d,
            t_f: d.t_f,
            dilation_radius: d.dilation_radius,
            dilation_iterations: d.dilation_iterations,
            variant: d.variant,
        }
    }
}

impl PostSection {
    pub fn to_core(&self, tau: f64) -> PostprocessConfig {
        PostprocessConfig {
            tau,
            k_d: self.k_d,
            k_f: self.k_f,
            t_d: self.t_d,
            t_f: self.t_f,
            dilation_radius: self.dilation_radius,
            dilation_iterations: self.dilation_iterations,
            variant: self.variant,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub bright_voxel: bool,
    pub svg_histogram: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { bright_voxel: true, svg_histogram: false }
    }
}

/// Optional pipeline gates; any failure exits with code 3.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gates {
    pub dsc_min: Option<f64>,
    /// Minimum mean-DSC margin over the bright-voxel threshold baseline.
    pub baseline_margin_min: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSection {
    pub cases: usize,
    pub phantom: PhantomConfig,
}

impl Default for DemoSection {
    fn default() -> Self {
        DemoSection { cases: 28, phantom: PhantomConfig::default() }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> CliResult<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config parse: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(0.0..=1.0).contains(&self.run.tau) {
            return Err(CliError::Config(format!("run.tau {} outside [0,1]", self.run.tau)));
        }
        if self.run.hu_window[0] >= self.run.hu_window[1] {
            return Err(CliError::Config("run.hu_window must be [lo, hi] with lo < hi".into()));
        }
        self.generator.validate()?;
        if let Some(h) = &self.holdout_generator {
            h.validate()?;
        }
        self.net.validate()?;
        self.post.to_core(self.run.tau).validate()?;
        self.edge.to_core(self.run.tau)?;
        Ok(())
    }

    /// The held-out lesion regime: explicit section if present, otherwise the
    /// training generator with mildly shifted scaling laws (wider probability
    /// bounds and brightness range), keeping test lesions inside the training
    /// diversity envelope but off its exact laws.
    pub fn holdout_generator(&self) -> GeneratorConfig {
        match &self.holdout_generator {
            Some(g) => g.clone(),
            None => {
                let mut g = self.generator.clone();
                let width = g.a_bound_range.1 - g.a_bound_range.0;
                g.a_bound_range.1 += width / 6.0;
                let mu_width = g.mu0_range.1 - g.mu0_range.0;
                g.mu0_range = (g.mu0_range.0 - mu_width / 8.0, g.mu0_range.1 + mu_width / 8.0);
                g
            }
        }
    }

    /// Compute tau for an HU threshold under this run's window.
    pub fn tau_for_hu(&self, t: f64) -> f64 {
        let lo = self.run.hu_window[0] as f64;
        let hi = self.run.hu_window[1] as f64;
        ((t - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

/// Named ablation preset applied as an overlay onto a loaded config.
///
/// The overlays are relative transformations; on the default full-scale
/// generator they reproduce the reference ablation settings exactly, and on
/// desk-scale configs they shift the configured ranges proportionally.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Baseline,
    FixedG,
    FixedA,
    FixedB,
    Variant(u8),
    GtRegions,
    GtLesions,
    NoEdgeRemoval,
    NoGrowing,
    GAsPrediction,
    TauForHu(i32),
    Kd7,
    Kf9,
    Td015,
    Tf02,
}

pub const PRESET_NAMES: &[&str] = &[
    "baseline",
    "fixed_g",
    "fixed_a",
    "fixed_b",
    "variant_i",
    "variant_ii",
    "variant_iii",
    "variant_iv",
    "variant_v",
    "variant_vi",
    "variant_vii",
    "variant_viii",
    "variant_ix",
    "variant_x",
    "variant_xi",
    "variant_xii",
    "variant_xiii",
    "variant_xiv",
    "gt_regions",
    "gt_lesions",
    "no_edge_removal",
    "no_growing",
    "g_as_prediction",
    "t_minus700",
    "t_minus600",
    "t_minus500",
    "t_minus400",
    "t_minus300",
    "kd_7",
    "kf_9",
    "td_015",
    "tf_02",
];

impl Preset {
    pub fn parse(name: &str) -> CliResult<Preset> {
        const ROMAN: [&str; 14] = [
            "i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix", "x", "xi", "xii", "xiii",
            "xiv",
        ];
        if let Some(r) = name.strip_prefix("variant_") {
            if let Some(pos) = ROMAN.iter().position(|&x| x == r) {
                return Ok(Preset::Variant(pos as u8 + 1));
            }
        }
        if let Some(t) = name.strip_prefix("t_minus") {
            if let Ok(v) = t.parse::<i32>() {
                if [700, 600, 500, 400, 300].contains(&v) {
                    return Ok(Preset::TauForHu(-v));
                }
            }
        }
        match name {
            "baseline" => Ok(Preset::Baseline),
            "fixed_g" => Ok(Preset::FixedG),
            "fixed_a" => Ok(Preset::FixedA),
            "fixed_b" => Ok(Preset::FixedB),
            "gt_regions" => Ok(Preset::GtRegions),
            "gt_lesions" => Ok(Preset::GtLesions),
            "no_edge_removal" => Ok(Preset::NoEdgeRemoval),
            "no_growing" => Ok(Preset::NoGrowing),
            "g_as_prediction" => Ok(Preset::GAsPrediction),
            "kd_7" => Ok(Preset::Kd7),
            "kf_9" => Ok(Preset::Kf9),
            "td_015" => Ok(Preset::Td015),
            "tf_02" => Ok(Preset::Tf02),
            other => Err(CliError::Config(format!(
                "unknown preset '{other}' (known: {})",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    pub fn apply(self, cfg: &mut RunConfig) {
        let g = &mut cfg.generator;
        match self {
            Preset::Baseline => {}
            Preset::FixedG => g.fixed_shapes = true,
            Preset::FixedA => g.fixed_a = Some(0.2),
            Preset::FixedB => g.fixed_b = Some(FixedTexture { sigma_b: 2.0, mu0: 0.6 }),
            Preset::Variant(1) => g.deform_enabled = false,
            Preset::Variant(2) => g.rotate_enabled = false,
            Preset::Variant(3) => {
                g.small_count_range = (3.0, 8.0);
                g.medium_count_range = (3.0, 8.0);
                g.p_large_base = 0.1;
            }
            Preset::Variant(4) => {
                g.small_count_range = (7.0, 12.0);
                g.medium_count_range = (7.0, 12.0);
                g.p_large_base = 0.3;
            }
            Preset::Variant(5) => {
                // Small axes lose their lower half, large axes their upper
                // half of the configured span.
                g.small_axes.0 = (g.small_axes.0 * 2.0).min(g.small_axes.1);
                g.large_axes.1 = g.large_axes.0 + (g.large_axes.1 - g.large_axes.0) / 2.0;
            }
            Preset::Variant(6) => {
                g.sigma_a_range = (g.sigma_a_range.0 * 2.0 / 3.0, g.sigma_a_range.1 * 1.2);
            }
            Preset::Variant(7) => {
                g.sigma_a_range = (g.sigma_a_range.0 * 4.0 / 3.0, g.sigma_a_range.1 * 0.8);
            }
            Preset::Variant(8) => {
                let width = g.a_bound_range.1 - g.a_bound_range.0;
                g.a_bound_range =
                    (g.a_bound_range.0 + width / 6.0, g.a_bound_range.1 - width / 6.0);
            }
            Preset::Variant(9) => {
                let width = g.a_bound_range.1 - g.a_bound_range.0;
                g.a_bound_range.1 += width / 6.0;
            }
            Preset::Variant(10) => g.sigma_b_narrow_weight = 0.5,
            Preset::Variant(11) => g.sigma_b_narrow.0 *= 0.75,
            Preset::Variant(12) => {
                g.sigma_b_wide.1 =
                    g.sigma_b_wide.0 + (g.sigma_b_wide.1 - g.sigma_b_wide.0) * 2.0 / 3.0;
            }
            Preset::Variant(13) => {
                let width = g.mu0_range.1 - g.mu0_range.0;
                g.mu0_range = (g.mu0_range.0 + width / 8.0, g.mu0_range.1 - width / 8.0);
            }
            Preset::Variant(14) => {
                let width = g.mu0_range.1 - g.mu0_range.0;
                g.mu0_range = (g.mu0_range.0 - width / 8.0, g.mu0_range.1 + width / 8.0);
            }
            Preset::Variant(_) => unreachable!("roman numeral range is checked in parse"),
            Preset::GtRegions => cfg.run.gt_mode = GtMode::Regions,
            Preset::GtLesions => cfg.run.gt_mode = GtMode::Lesions,
            Preset::NoEdgeRemoval => cfg.run.edge_removal = false,
            Preset::NoGrowing => cfg.post.variant = PostVariant::NoGrowing,
            Preset::GAsPrediction => cfg.post.variant = PostVariant::GAsPrediction,
            Preset::TauForHu(t) => cfg.run.tau = cfg.tau_for_hu(t as f64),
            Preset::Kd7 => cfg.post.k_d = 7,
            Preset::Kf9 => cfg.post.k_f = 9,
            Preset::Td015 => cfg.post.t_d = 0.15,
            Preset::Tf02 => cfg.post.t_f = 0.2,
        }
    }
}

/// Apply a comma-separated preset list in order.
pub fn apply_presets(cfg: &mut RunConfig, presets: &str) -> CliResult<()> {
    for name in presets.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        Preset::parse(name)?.apply(cfg);
    }
    cfg.validate()
}
