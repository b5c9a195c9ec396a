//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run it alone with
//! `cargo test -p normseg-cli --test acceptance -- --nocapture`.
//! Criteria 6-8 share one reference benchmark run (the `configs/bench.toml`
//! setup plus four ablation retrainings); expect roughly half an hour on two
//! desktop cores for the whole suite.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use normseg_cli::commands::{self, cmd_demo, cmd_eval, cmd_infer, cmd_synth, cmd_train};
use normseg_cli::config::{apply_presets, RunConfig};
use normseg_core::evalkit;
use normseg_core::lesionforge::{self, GeneratorConfig, GtMode};
use normseg_core::morphkit::{self, Connectivity, StructElem};
use normseg_core::normnet::{self, NetConfig, TinyNet};
use normseg_core::postseg::{self, PostVariant, PostprocessConfig};
use normseg_core::seeds;
use normseg_core::vol3::{self, Dims3, Mask3, Volume3};
use normseg_testkit::{fixtures, oracles, stats};
use rand::Rng;

fn criterion(number: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {number} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number} {name} failed: {detail}");
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

// ---------------------------------------------------------------------------
// Criterion 1: kernel oracle suite.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_kernel_oracles() {
    let start = Instant::now();
    let mut max_filter_diff = 0.0f64;
    for i in 0..100u64 {
        let dims = fixtures::random_dims(1000 + i, 4, 12);
        let vol = fixtures::random_volume(dims, 2000 + i);
        let mask = fixtures::random_mask(dims, 3000 + i, 0.3);

        let sigma = 0.6 + (i % 12) as f64 * 0.2;
        let ours = morphkit::gaussian_filter(&vol, sigma).unwrap();
        for (a, b) in ours.data().iter().zip(oracles::dense_gaussian(&vol, sigma)) {
            max_filter_diff = max_filter_diff.max((*a as f64 - b).abs());
        }

        let k = [1usize, 3, 5, 7][(i % 4) as usize];
        let ours = morphkit::mean_filter(&vol, k).unwrap();
        for (a, b) in ours.data().iter().zip(oracles::dense_mean(&vol, k)) {
            max_filter_diff = max_filter_diff.max((*a as f64 - b).abs());
        }

        let iterations = (i % 3) as usize;
        let ours = morphkit::dilate(&mask, StructElem::cube(1).unwrap(), iterations);
        assert_eq!(ours, oracles::brute_dilate(&mask, 1, iterations), "dilate fixture {i}");

        let (conn, flag) =
            if i % 2 == 0 { (Connectivity::TwentySix, true) } else { (Connectivity::Six, false) };
        let ours: Vec<Vec<usize>> =
            morphkit::connected_components(&mask, conn).into_iter().map(|c| c.voxels).collect();
        assert_eq!(ours, oracles::flood_fill_components(&mask, flag), "components fixture {i}");

        let (k, t) = [(3usize, 0.2f64), (5, 0.15), (9, 0.2), (7, 0.1)][(i % 4) as usize];
        let ours = postseg::smooth_threshold(&mask, k, t).unwrap();
        assert_eq!(ours, oracles::brute_smooth_threshold(&mask, k, t), "smooth fixture {i}");
    }
    let elapsed = start.elapsed();
    criterion(
        1,
        "kernel oracle suite",
        max_filter_diff < 1e-5 && elapsed < Duration::from_secs(60),
        &format!("100 fixtures per kernel, max filter diff {max_filter_diff:.2e}, {elapsed:.1?}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: generator law suite.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_generator_laws() {
    const N: usize = 10_000;
    let cfg = GeneratorConfig::default();
    let mut rng = seeds::rng_from(424_242);
    let mut worst_p = f64::INFINITY;
    let mut detail = String::new();
    let mut note = |name: &str, p: f64| {
        if p < worst_p {
            worst_p = p;
            detail = format!("tightest law {name} p={p:.4}");
        }
        assert!(p > 0.01, "law {name} rejected: p={p}");
    };

    // Small/medium counts at lambda = 1: discrete uniform on 5..=10.
    for (name, range) in [("N_s", cfg.small_count_range), ("N_m", cfg.medium_count_range)] {
        let mut cells = [0usize; 6];
        for _ in 0..N {
            cells[cfg.sample_count(range, 1.0, &mut rng) - 5] += 1;
        }
        let (_, p) = stats::chi_square_gof(&cells, &[N as f64 / 6.0; 6]);
        note(name, p);
    }

    // Large-ellipsoid frequency 0.2 * lambda.
    let hits = (0..N).filter(|_| cfg.sample_large(1.0, &mut rng)).count();
    let (_, p) = stats::chi_square_gof(&[hits, N - hits], &[0.2 * N as f64, 0.8 * N as f64]);
    note("P_L", p);

    // sigma_a uniform law.
    let sigma_a: Vec<f64> = (0..N).map(|_| cfg.sample_sigma_a(&mut rng)).collect();
    let (_, p) = stats::ks_test(&sigma_a, stats::uniform_cdf(3.0, 15.0));
    note("sigma_a", p);

    // sigma_b mixture weights 0.7 / 0.3.
    let narrow = (0..N).filter(|_| cfg.sample_sigma_b(&mut rng) <= 2.0).count();
    let (_, p) =
        stats::chi_square_gof(&[narrow, N - narrow], &[0.7 * N as f64, 0.3 * N as f64]);
    note("sigma_b weights", p);

    // mu0 uniform law.
    let mu0: Vec<f64> = (0..N).map(|_| cfg.sample_mu0(&mut rng)).collect();
    let (_, p) = stats::ks_test(&mu0, stats::uniform_cdf(0.4, 0.8));
    note("mu0", p);

    // Probability bounds: the gap constraint holds on every draw, and the
    // marginals match the triangle law of the rejection sampler.
    let mut lowers = Vec::with_capacity(N);
    let mut uppers = Vec::with_capacity(N);
    for _ in 0..N {
        let (l, u) = cfg.sample_a_bounds(&mut rng);
        assert!(u - l > cfg.a_min_gap, "gap violated: ({l}, {u})");
        lowers.push(l);
        uppers.push(u);
    }
    let lower_cdf = |x: f64| {
        let x = x.clamp(0.0, 0.15);
        (0.15 * x - x * x / 2.0) / 0.01125
    };
    let (_, p) = stats::ks_test(&lowers, lower_cdf);
    note("a_lower", p);
    let (_, p) = stats::ks_test(&uppers, move |x| 1.0 - lower_cdf(0.3 - x));
    note("a_upper", p);

    // Per-draw field extremes are exactly the sampled bounds.
    for _ in 0..100 {
        let f = lesionforge::sample_probability_field(Dims3::cube(10), &cfg, &mut rng).unwrap();
        let mn = f.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let mx = f.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(mn, f.a_lower, "field min must be the lower bound exactly");
        assert_eq!(mx, f.a_upper, "field max must be the upper bound exactly");
    }

    criterion(2, "generator law suite", worst_p > 0.01, &format!("n=10^4 per law, {detail}"));
}

// ---------------------------------------------------------------------------
// Criterion 3: equation fixtures.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_equation_fixtures() {
    // Ground-truth truth table over all 8 (bright, shape, mask) combinations.
    let dims = Dims3::new(1, 1, 8);
    let tau = 1.0 / 3.0;
    let mut intensity = Vec::new();
    let mut shape_bits = Vec::new();
    let mut lung_bits = Vec::new();
    let mut expected = Vec::new();
    for bright in [false, true] {
        for in_shape in [false, true] {
            for in_lung in [false, true] {
                intensity.push(if bright { 0.5f32 } else { 0.2 });
                shape_bits.push(in_shape);
                lung_bits.push(in_lung);
                expected.push(bright && !in_shape && in_lung);
            }
        }
    }
    let thorax = Volume3::new_windowed(dims, [1.0; 3], intensity).unwrap();
    let shape = Mask3::from_bits(dims, shape_bits.clone()).unwrap();
    let lung = Mask3::from_bits(dims, lung_bits.clone()).unwrap();
    let gt = lesionforge::make_ground_truth(&thorax, &lung, &shape, tau, GtMode::Tissues).unwrap();
    assert_eq!(gt.bits(), &expected[..], "tissues truth table");
    let regions =
        lesionforge::make_ground_truth(&thorax, &lung, &shape, tau, GtMode::Regions).unwrap();
    let lesions =
        lesionforge::make_ground_truth(&thorax, &lung, &shape, tau, GtMode::Lesions).unwrap();
    for i in 0..8 {
        assert_eq!(regions.bits()[i], lung_bits[i] && !shape_bits[i]);
        assert_eq!(lesions.bits()[i], lung_bits[i] && shape_bits[i]);
    }

    // Scaling arithmetic on a constant field.
    let (beta, scaled) = lesionforge::scale_to_target_mean(&[0.5f32; 27], 0.2, 0.6).unwrap();
    assert!((beta - 1.2).abs() < 1e-12, "beta = mu0 / mean");
    assert!(scaled.iter().all(|&v| (v - 0.6).abs() < 1e-6));
    assert!(lesionforge::scale_to_target_mean(&[0.1f32; 27], 0.2, 0.6).is_none());

    // Max-compositing identities.
    let h = Volume3::new_windowed(Dims3::cube(3), [1.0; 3], vec![0.2; 27]).unwrap();
    assert_eq!(lesionforge::composite(&h, &[]).unwrap(), h, "no patches");
    let below = lesionforge::TexturePatch {
        origin: (0, 0, 0),
        dims: Dims3::cube(3),
        values: vec![0.1; 27],
        meta: Default::default(),
    };
    assert_eq!(lesionforge::composite(&h, &[below]).unwrap(), h, "patch below thorax");
    let mut one = vec![0.0f32; 27];
    one[13] = 0.7;
    let single = lesionforge::TexturePatch {
        origin: (0, 0, 0),
        dims: Dims3::cube(3),
        values: one,
        meta: Default::default(),
    };
    let out = lesionforge::composite(&h, &[single]).unwrap();
    assert_eq!(out.data()[13], 0.7);
    assert!(out.data().iter().enumerate().all(|(i, &v)| i == 13 || v == 0.2));

    // Growing set algebra.
    let dims = Dims3::cube(9);
    let cfg = PostprocessConfig::default();
    let empty = Mask3::empty(dims);
    let full = Mask3::full(dims);
    let dot = Mask3::from_indices(dims, &[dims.index(4, 4, 4)]).unwrap();
    assert!(postseg::finalize(&empty, &full, &cfg).unwrap().is_empty_mask());
    assert!(postseg::finalize(&dot, &empty, &cfg).unwrap().is_empty_mask());
    let grown = morphkit::dilate(&dot, StructElem::cube(1).unwrap(), cfg.dilation_iterations);
    assert_eq!(postseg::finalize(&dot, &full, &cfg).unwrap(), grown);

    criterion(3, "equation fixtures", true, "truth table, scaling, compositing, growing all exact");
}

// ---------------------------------------------------------------------------
// Criterion 4: gradient suite.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_gradient_suite() {
    let start = Instant::now();
    let cfg = NetConfig {
        levels: 2,
        base_channels: 2,
        patch_dims: [8, 8, 8],
        ..NetConfig::default()
    };
    let mut worst = 0.0f64;
    for seed in [101u64, 202, 303] {
        let net = TinyNet::init(cfg.clone(), seed).unwrap();
        let dims = Dims3::cube(8);
        let mut rng = seeds::rng_from(seed + 7);
        let data: Vec<f32> = (0..dims.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let patch = Volume3::new_windowed(dims, [1.0; 3], data).unwrap();
        let gt =
            Mask3::from_bits(dims, (0..dims.len()).map(|_| rng.random_bool(0.3)).collect()).unwrap();
        let (_, analytic) = net.loss_and_gradients(&patch, &gt).unwrap();
        let h = 2e-5f64;
        for i in 0..net.param_count() {
            let theta = net.params()[i] as f64;
            let mut plus = net.clone();
            plus.params_mut()[i] = (theta + h) as f32;
            let mut minus = net.clone();
            minus.params_mut()[i] = (theta - h) as f32;
            let h_eff = plus.params()[i] as f64 - minus.params()[i] as f64;
            let fd = (plus.loss_and_gradients(&patch, &gt).unwrap().0
                - minus.loss_and_gradients(&patch, &gt).unwrap().0)
                / h_eff;
            let err = (fd - analytic[i]).abs() / (fd.abs() + analytic[i].abs()).max(1e-6);
            worst = worst.max(err);
            assert!(err < 1e-3, "seed {seed} parameter {i}: relative error {err:.2e}");
        }
    }

    // The loss gradient w.r.t. predictions, checked the same way.
    let mut rng = seeds::rng_from(5150);
    let probs: Vec<f64> = (0..128).map(|_| rng.random_range(0.05..0.95)).collect();
    let gt: Vec<bool> = (0..128).map(|_| rng.random_bool(0.4)).collect();
    let (_, grad) = normnet::dice_bce_loss(&probs, &gt, 1.0, 1.0);
    for i in 0..probs.len() {
        let h = 1e-6;
        let mut plus = probs.clone();
        plus[i] += h;
        let mut minus = probs.clone();
        minus[i] -= h;
        let fd = (normnet::dice_bce_loss(&plus, &gt, 1.0, 1.0).0
            - normnet::dice_bce_loss(&minus, &gt, 1.0, 1.0).0)
            / (2.0 * h);
        let err = (fd - grad[i]).abs() / (fd.abs() + grad[i].abs()).max(1e-6);
        worst = worst.max(err);
        assert!(err < 1e-3, "loss gradient voxel {i}: {err:.2e}");
    }

    let elapsed = start.elapsed();
    criterion(
        4,
        "gradient suite",
        worst < 1e-3 && elapsed < Duration::from_secs(300),
        &format!("worst relative error {worst:.2e}, {elapsed:.1?}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: determinism of synth -> train -> infer.
// ---------------------------------------------------------------------------

fn determinism_config(root: &Path) -> RunConfig {
    let text = format!(
        r#"
schema_version = 1
[run]
master_seed = 77
train_cases = 2
holdout_cases = 2
pairs_per_case = 1
holdout_pairs_per_case = 1
[demo]
cases = 4
phantom = {{ dims = [32, 32, 32], vessel_trees = 4 }}
[generator]
ref_mask_volume = 4500
small_axes = [1.5, 3.0]
medium_axes = [3.0, 5.0]
large_axes = [5.0, 7.0]
small_count_range = [3.0, 6.0]
medium_count_range = [2.0, 4.0]
elastic_grid_spacing = 4
elastic_magnitude = 1.5
[net]
levels = 2
base_channels = 2
patch_dims = [16, 16, 16]
iterations = 8
batch_size = 2
ensemble_size = 2
vote_quorum = 1
[paths]
cases_dir = "{root}/cases"
corpus_dir = "{root}/corpus"
model_dir = "{root}/models"
pred_dir = "{root}/preds"
report_dir = "{root}/reports"
"#,
        root = root.display()
    );
    RunConfig::from_toml_str(&text).unwrap()
}

fn dir_digest(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((
                    p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

#[test]
fn criterion_5_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for run in 0..2 {
        let root = tmp.path().join(format!("run{run}"));
        let cfg = determinism_config(&root);
        cmd_demo(&cfg).unwrap();
        cmd_synth(&cfg).unwrap();
        cmd_train(&cfg).unwrap();
        cmd_infer(&cfg, true).unwrap();
        let mut all = dir_digest(&cfg.paths.corpus_dir);
        all.extend(dir_digest(&cfg.paths.model_dir));
        all.extend(dir_digest(&cfg.paths.pred_dir));
        digests.push(all);
    }
    let equal = digests[0] == digests[1];
    let n = digests[0].len();
    criterion(
        5,
        "determinism",
        equal && n > 0,
        &format!("{n} artifact files bitwise identical across reruns"),
    );
}

// ---------------------------------------------------------------------------
// Criteria 6-8 share the reference benchmark.
// ---------------------------------------------------------------------------

struct BenchResults {
    baseline: commands::PipelineSummary,
    baseline_cfg: RunConfig,
    ablation_dsc: BTreeMap<&'static str, f64>,
    baseline_elapsed: Duration,
}

static BENCH: OnceLock<BenchResults> = OnceLock::new();

fn summarize(cfg: &RunConfig) -> commands::PipelineSummary {
    let outcome = cmd_eval(cfg).unwrap();
    let mean = |vals: Vec<Option<f64>>| evalkit::aggregate(vals).map(|s| s.mean).unwrap_or(f64::NAN);
    let mean_dsc = mean(outcome.reports.iter().map(|r| r.dsc).collect());
    let baseline_mean_dsc = mean(outcome.baseline_dsc.clone());
    commands::PipelineSummary {
        cases: outcome.reports.len(),
        mean_dsc,
        mean_psc: mean(outcome.reports.iter().map(|r| r.psc).collect()),
        mean_sen: mean(outcome.reports.iter().map(|r| r.sen).collect()),
        baseline_mean_dsc,
        margin: mean_dsc - baseline_mean_dsc,
    }
}

fn run_preset(root: &Path, preset: Option<&str>) -> (RunConfig, commands::PipelineSummary) {
    let mut cfg = RunConfig::load(&workspace_root().join("configs/bench.toml")).unwrap();
    cfg.gates = Default::default();
    if let Some(p) = preset {
        apply_presets(&mut cfg, p).unwrap();
    }
    cfg.paths.rebase(root);
    fs::create_dir_all(root).unwrap();
    cmd_demo(&cfg).unwrap();
    cmd_synth(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    cmd_infer(&cfg, false).unwrap();
    let summary = summarize(&cfg);
    (cfg, summary)
}

fn bench() -> &'static BenchResults {
    BENCH.get_or_init(|| {
        let root = workspace_root().join("target/acceptance");
        let _ = fs::remove_dir_all(&root);
        fs::create_dir_all(&root).unwrap();

        let t0 = Instant::now();
        let (baseline_cfg, baseline) = run_preset(&root.join("baseline"), None);
        let baseline_elapsed = t0.elapsed();

        let mut ablation_dsc = BTreeMap::new();
        for preset in ["fixed_g", "fixed_a", "fixed_b", "gt_regions"] {
            let (_, summary) = run_preset(&root.join(format!("ab_{preset}")), Some(preset));
            ablation_dsc.insert(preset, summary.mean_dsc);
        }
        BenchResults { baseline, baseline_cfg, ablation_dsc, baseline_elapsed }
    })
}

#[test]
fn criterion_6_end_to_end_benchmark() {
    let b = bench();
    let s = &b.baseline;
    let pass = s.cases == 16
        && s.mean_dsc >= 0.50
        && s.margin >= 0.10
        && b.baseline_elapsed < Duration::from_secs(30 * 60);
    criterion(
        6,
        "end-to-end synthetic benchmark",
        pass,
        &format!(
            "{} cases, mean DSC {:.3} (gate 0.50), margin over threshold baseline {:+.3} (gate +0.10), {:?}",
            s.cases, s.mean_dsc, s.margin, b.baseline_elapsed
        ),
    );
}

#[test]
fn criterion_7_ablation_directions() {
    let b = bench();
    let base = b.baseline.mean_dsc;
    let drop = |name: &str| base - b.ablation_dsc[name];
    let (dg, da, db) = (drop("fixed_g"), drop("fixed_a"), drop("fixed_b"));
    let fixed_b_largest = db > dg && db > da;
    let regions_degrades = b.ablation_dsc["gt_regions"] < base;
    criterion(
        7,
        "ablation direction checks",
        fixed_b_largest && regions_degrades,
        &format!(
            "DSC drops vs baseline {base:.3}: fixed_g {dg:+.3}, fixed_a {da:+.3}, fixed_b {db:+.3}; gt_regions DSC {:.3}",
            b.ablation_dsc["gt_regions"]
        ),
    );
}

#[test]
fn criterion_8_postprocessing_variant_parity() {
    let b = bench();
    let cfg = &b.baseline_cfg;
    // Recompute predictions from the stored voted healthy masks under the
    // g-as-prediction variant and compare precision with the full variant.
    let holdout = commands::load_corpus(&cfg.paths.corpus_dir.join("holdout")).unwrap();
    let mut full_psc = Vec::new();
    let mut g_psc = Vec::new();
    let g_cfg = PostprocessConfig {
        variant: PostVariant::GAsPrediction,
        ..cfg.post.to_core(cfg.run.tau)
    };
    for entry in &holdout {
        let pred_path = cfg.paths.pred_dir.join(format!("{}.pred.vol", entry.stem));
        let full_pred = vol3::read_mask(pred_path).unwrap();
        full_psc.push(evalkit::confusion(&full_pred, &entry.gt, &entry.lung).unwrap().psc());

        let healthy =
            vol3::read_mask(cfg.paths.pred_dir.join(format!("{}.healthy.vol", entry.stem))).unwrap();
        let g_pred = postseg::segment(&entry.input, &entry.lung, &healthy, &g_cfg).unwrap();
        g_psc.push(evalkit::confusion(&g_pred, &entry.gt, &entry.lung).unwrap().psc());
    }
    let full_mean = evalkit::aggregate(full_psc).unwrap().mean;
    let g_mean = evalkit::aggregate(g_psc).unwrap().mean;
    criterion(
        8,
        "post-processing variant parity",
        g_mean < full_mean,
        &format!("mean precision: full variant {full_mean:.3}, g-as-prediction {g_mean:.3}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: metric identities.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_metric_identities() {
    let mut rng = seeds::rng_from(9_000);
    let mut checked = 0usize;
    for _ in 0..10_000 {
        let c = evalkit::ConfusionCounts {
            true_pos: rng.random_range(0..200),
            false_pos: rng.random_range(0..200),
            false_neg: rng.random_range(0..200),
            true_neg: rng.random_range(0..200),
        };
        if let (Some(d), Some(p), Some(s)) = (c.dsc(), c.psc(), c.sen()) {
            if p + s > 0.0 {
                assert!(
                    (d - 2.0 * p * s / (p + s)).abs() < 1e-12,
                    "harmonic-mean identity failed for {c:?}"
                );
                checked += 1;
            }
        }
    }

    let mut auc_fixtures = 0usize;
    for i in 0..100u64 {
        let mut rng = seeds::rng_from(77_000 + i);
        let n_pos = rng.random_range(1..250);
        let n_neg = rng.random_range(1..250);
        // Quantized scores force plenty of ties.
        let pos: Vec<f64> =
            (0..n_pos).map(|_| (rng.random_range(0.0..1.0f64) * 10.0).round() / 10.0).collect();
        let neg: Vec<f64> =
            (0..n_neg).map(|_| (rng.random_range(0.0..0.9f64) * 10.0).round() / 10.0).collect();
        let ours = evalkit::auc_midrank(&pos, &neg).unwrap();
        let oracle = oracles::pair_counting_auc(&pos, &neg).unwrap();
        assert!(
            (ours - oracle).abs() < 1e-12,
            "fixture {i}: midrank {ours} vs pair counting {oracle}"
        );
        auc_fixtures += 1;
    }

    criterion(
        9,
        "metric identities",
        checked > 9000 && auc_fixtures == 100,
        &format!("{checked} harmonic-mean checks, {auc_fixtures} AUC fixtures"),
    );
}
