//! Command implementations behind the CLI: demo-data generation, corpus
//! synthesis, ensemble training, inference, evaluation, and the composed
//! pipeline. Parallel loops only span independent outputs, so worker count
//! never changes any artifact.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use normseg_core::evalkit::{self, CaseReport};
use normseg_core::lesionforge::{generate_pair, GtMode, TrainPair};
use normseg_core::lunglab::{self, ThoraxCase};
use normseg_core::normnet::{self, TinyNet};
use normseg_core::phantom;
use normseg_core::postseg;
use normseg_core::seeds;
use normseg_core::vol3::{self, Mask3, Volume3};

use crate::config::RunConfig;
use crate::{CliError, CliResult};

/// A healthy input case on disk: `<id>.vol` plus `<id>.lung.vol`.
#[derive(Clone, Debug)]
pub struct CaseFiles {
    pub id: String,
    pub volume: PathBuf,
    pub lung: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn discover_cases(dir: &Path) -> CliResult<Vec<CaseFiles>> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut cases = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        let name = match path.file_name().and_then(|s| s.to_str()) {
            Some(n) => n,
            None => continue,
        };
        if !name.ends_with(".vol") || name.ends_with(".lung.vol") {
            continue;
        }
        let id = name.trim_end_matches(".vol").to_string();
        let lung = dir.join(format!("{id}.lung.vol"));
        if !lung.exists() {
            return Err(CliError::Io(format!("{}: missing lung mask {}", path.display(), lung.display())));
        }
        cases.push(CaseFiles { id, volume: path, lung });
    }
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(cases)
}

/// Load a case, windowing raw HU volumes on the fly.
fn load_windowed_case(cfg: &RunConfig, files: &CaseFiles) -> CliResult<(Volume3, Mask3)> {
    let volume = vol3::read_volume(&files.volume)?;
    let volume = if volume.windowed() {
        volume
    } else {
        vol3::hu_window(&volume, cfg.run.hu_window[0], cfg.run.hu_window[1])?
    };
    let lung = vol3::read_mask(&files.lung)?;
    if lung.dims() != volume.dims() {
        return Err(CliError::Config(format!(
            "case {}: volume dims {} but lung dims {}",
            files.id,
            volume.dims(),
            lung.dims()
        )));
    }
    Ok((volume, lung))
}

fn prepare_case(cfg: &RunConfig, volume: &Volume3, lung: &Mask3, edge_removal: bool) -> CliResult<ThoraxCase> {
    let case = if edge_removal {
        lunglab::remove_erroneous_edges(volume, lung, &cfg.edge.to_core(cfg.run.tau)?)?
    } else {
        lunglab::prepare_as_is(volume, lung)?
    };
    Ok(case)
}

/// Generate phantom healthy cases into the case directory.
pub fn cmd_demo(cfg: &RunConfig) -> CliResult<usize> {
    let dir = &cfg.paths.cases_dir;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let results: Vec<CliResult<()>> = (0..cfg.demo.cases)
        .into_par_iter()
        .map(|i| {
            let seed = seeds::derive_seed(cfg.run.master_seed, seeds::STREAM_PHANTOM, i as u64);
            let (volume, lung) = phantom::generate_phantom(&cfg.demo.phantom, seed)?;
            let id = format!("case_{i:03}");
            vol3::write_volume(dir.join(format!("{id}.vol")), &volume)?;
            vol3::write_mask(dir.join(format!("{id}.lung.vol")), &lung)?;
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    Ok(cfg.demo.cases)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SynthSummary {
    pub train_pairs: usize,
    pub holdout_pairs: usize,
    pub zero_texture_patches: usize,
}

/// Synthesize the training corpus and the held-out test cases.
pub fn cmd_synth(cfg: &RunConfig) -> CliResult<SynthSummary> {
    let cases = discover_cases(&cfg.paths.cases_dir)?;
    let need = cfg.run.train_cases + cfg.run.holdout_cases;
    if cases.len() < need {
        return Err(CliError::Config(format!(
            "need {need} cases ({} train + {} holdout) but found {}",
            cfg.run.train_cases,
            cfg.run.holdout_cases,
            cases.len()
        )));
    }
    let train_dir = cfg.paths.corpus_dir.join("train");
    let holdout_dir = cfg.paths.corpus_dir.join("holdout");
    fs::create_dir_all(&train_dir).map_err(|e| io_err(&train_dir, e))?;
    fs::create_dir_all(&holdout_dir).map_err(|e| io_err(&holdout_dir, e))?;

    let train_split = &cases[..cfg.run.train_cases];
    let holdout_split = &cases[cfg.run.train_cases..need];

    let synth_split = |split: &[CaseFiles],
                       dir: &Path,
                       pairs_per_case: usize,
                       stream: u64,
                       gen: &normseg_core::lesionforge::GeneratorConfig,
                       gt_mode: GtMode,
                       edge_removal: bool|
     -> CliResult<(usize, usize)> {
        let outcomes: Vec<CliResult<usize>> = split
            .par_iter()
            .enumerate()
            .map(|(ci, files)| {
                let (volume, lung) = load_windowed_case(cfg, files)?;
                let case = prepare_case(cfg, &volume, &lung, edge_removal)?;
                let case_seed = seeds::derive_seed(cfg.run.master_seed, stream, ci as u64);
                let mut zero_textures = 0usize;
                for k in 0..pairs_per_case {
                    let pair_seed = seeds::derive_seed(case_seed, 1, k as u64);
                    let (pair, meta) = generate_pair(&case, gen, cfg.run.tau, gt_mode, pair_seed)?;
                    zero_textures += meta.blobs.iter().filter(|b| b.zero_texture).count();
                    let stem = dir.join(format!("{}_p{k}", files.id));
                    write_pair(&stem, &pair, &meta.to_kv())?;
                }
                Ok(zero_textures)
            })
            .collect();
        let mut zero = 0usize;
        for o in outcomes {
            zero += o?;
        }
        Ok((split.len() * pairs_per_case, zero))
    };

    let (train_pairs, zt_train) = synth_split(
        train_split,
        &train_dir,
        cfg.run.pairs_per_case,
        seeds::STREAM_SYNTH,
        &cfg.generator,
        cfg.run.gt_mode,
        cfg.run.edge_removal,
    )?;
    // Held-out cases mimic unseen abnormal volumes: lesions from the shifted
    // regime, ground truth is the lesion region itself, and the lung mask is
    // taken as-is (no edge removal at inference time).
    let holdout_gen = cfg.holdout_generator();
    let (holdout_pairs, zt_holdout) = synth_split(
        holdout_split,
        &holdout_dir,
        cfg.run.holdout_pairs_per_case,
        seeds::STREAM_HOLDOUT,
        &holdout_gen,
        GtMode::Lesions,
        false,
    )?;

    let summary = SynthSummary {
        train_pairs,
        holdout_pairs,
        zero_texture_patches: zt_train + zt_holdout,
    };
    if summary.train_pairs == 0 {
        eprintln!("warning: synthesized an empty training corpus");
    }
    if summary.zero_texture_patches > 0 {
        eprintln!(
            "warning: {} texture patch(es) never cleared the mean threshold and were emitted as zeros",
            summary.zero_texture_patches
        );
    }
    Ok(summary)
}

fn write_pair(stem: &Path, pair: &TrainPair, meta_kv: &str) -> CliResult<()> {
    let p = |ext: &str| stem.with_extension(ext);
    vol3::write_volume(p("input.vol"), &pair.input)?;
    vol3::write_mask(p("gt.vol"), &pair.gt)?;
    vol3::write_mask(p("lung.vol"), &pair.lung)?;
    let meta_path = p("meta.txt");
    fs::write(&meta_path, meta_kv).map_err(|e| io_err(&meta_path, e))?;
    Ok(())
}

/// A corpus entry on disk, keyed by its file stem.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub stem: String,
    pub input: Volume3,
    pub gt: Mask3,
    pub lung: Mask3,
}

pub fn load_corpus(dir: &Path) -> CliResult<Vec<CorpusEntry>> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut stems: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".input.vol"))
        .map(|n| n.trim_end_matches(".input.vol").to_string())
        .collect();
    stems.sort();
    let mut out = Vec::with_capacity(stems.len());
    for stem in stems {
        let p = |ext: &str| dir.join(format!("{stem}.{ext}"));
        out.push(CorpusEntry {
            input: vol3::read_volume(p("input.vol"))?,
            gt: vol3::read_mask(p("gt.vol"))?,
            lung: vol3::read_mask(p("lung.vol"))?,
            stem,
        });
    }
    Ok(out)
}

fn corpus_to_pairs(entries: &[CorpusEntry]) -> Vec<TrainPair> {
    entries
        .iter()
        .map(|e| TrainPair {
            input: e.input.clone(),
            gt: e.gt.clone(),
            lung: e.lung.clone(),
            lesion_shape: Mask3::empty(e.input.dims()),
            seed: 0,
        })
        .collect()
}

/// Train the ensemble; one model file and one loss log per member.
pub fn cmd_train(cfg: &RunConfig) -> CliResult<usize> {
    let train_dir = cfg.paths.corpus_dir.join("train");
    let entries = load_corpus(&train_dir)?;
    if entries.is_empty() {
        return Err(CliError::Config(format!("no training pairs in {}", train_dir.display())));
    }
    let pairs = corpus_to_pairs(&entries);
    fs::create_dir_all(&cfg.paths.model_dir).map_err(|e| io_err(&cfg.paths.model_dir, e))?;

    let results: Vec<CliResult<()>> = (0..cfg.net.ensemble_size)
        .into_par_iter()
        .map(|member| {
            let member_seed =
                seeds::derive_seed(cfg.run.master_seed, seeds::STREAM_TRAIN, member as u64);
            let (net, log) = normnet::train(&pairs, &cfg.net, member_seed)?;
            net.save(cfg.paths.model_dir.join(format!("model_{member}.tnet")))?;
            let mut csv = String::from("iteration,loss\n");
            for row in &log {
                csv.push_str(&format!("{},{:.8}\n", row.iteration, row.loss));
            }
            let log_path = cfg.paths.model_dir.join(format!("train_log_{member}.csv"));
            fs::write(&log_path, csv).map_err(|e| io_err(&log_path, e))?;
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    Ok(cfg.net.ensemble_size)
}

pub fn load_models(dir: &Path) -> CliResult<Vec<TinyNet>> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.starts_with("model_") && n.ends_with(".tnet"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::Io(format!("no model files in {}", dir.display())));
    }
    names.iter().map(|n| TinyNet::load(dir.join(n)).map_err(CliError::from)).collect()
}

/// Per-case inference: ensemble healthy vote, post-processing, artifacts.
pub fn cmd_infer(cfg: &RunConfig, emit_intermediates: bool) -> CliResult<usize> {
    let models = load_models(&cfg.paths.model_dir)?;
    let quorum = cfg.net.vote_quorum;
    if quorum > models.len() {
        return Err(CliError::Config(format!(
            "vote_quorum {quorum} exceeds model count {}",
            models.len()
        )));
    }
    let holdout = load_corpus(&cfg.paths.corpus_dir.join("holdout"))?;
    if holdout.is_empty() {
        return Err(CliError::Io("no held-out cases to infer".into()));
    }
    fs::create_dir_all(&cfg.paths.pred_dir).map_err(|e| io_err(&cfg.paths.pred_dir, e))?;
    let post = cfg.post.to_core(cfg.run.tau);

    let results: Vec<CliResult<()>> = holdout
        .par_iter()
        .map(|entry| {
            let mut healthy_masks = Vec::with_capacity(models.len());
            let mut prob_sum = vec![0.0f64; entry.input.dims().len()];
            for net in &models {
                let prob = normnet::predict_prob(net, &entry.input, &entry.lung)?;
                for (acc, &p) in prob_sum.iter_mut().zip(prob.data()) {
                    *acc += p as f64;
                }
                healthy_masks.push(normnet::healthy_from_prob(
                    &prob,
                    &entry.lung,
                    cfg.net.prob_threshold,
                )?);
            }
            let voted = normnet::ensemble_vote(&healthy_masks, quorum)?;
            let mean_prob: Vec<f32> =
                prob_sum.iter().map(|&s| (s / models.len() as f64) as f32).collect();
            let prob_vol =
                Volume3::new_windowed(entry.input.dims(), entry.input.spacing(), mean_prob)?;
            let stages = postseg::segment_stages(&entry.input, &entry.lung, &voted, &post)?;

            let p = |ext: &str| cfg.paths.pred_dir.join(format!("{}.{ext}", entry.stem));
            vol3::write_mask(p("pred.vol"), &stages.prediction)?;
            vol3::write_volume(p("prob.vol"), &prob_vol)?;
            vol3::write_mask(p("healthy.vol"), &voted)?;
            if emit_intermediates {
                vol3::write_mask(p("d.vol"), &stages.bright_candidates)?;
                vol3::write_mask(p("e.vol"), &stages.smoothed_bright)?;
                vol3::write_mask(p("f.vol"), &stages.full_candidates)?;
                vol3::write_mask(p("g.vol"), &stages.smoothed_full)?;
            }
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    Ok(holdout.len())
}

/// Evaluation results: per-case reports plus the intensity-threshold
/// baseline's Dice scores, in the same case order.
pub struct EvalOutcome {
    pub reports: Vec<CaseReport>,
    pub baseline_dsc: Vec<Option<f64>>,
}

pub fn cmd_eval(cfg: &RunConfig) -> CliResult<EvalOutcome> {
    let holdout = load_corpus(&cfg.paths.corpus_dir.join("holdout"))?;
    if holdout.is_empty() {
        return Err(CliError::Io("no held-out cases to evaluate".into()));
    }
    let mut reports = Vec::with_capacity(holdout.len());
    let mut baseline = Vec::with_capacity(holdout.len());
    for entry in &holdout {
        let p = |ext: &str| cfg.paths.pred_dir.join(format!("{}.{ext}", entry.stem));
        let pred = vol3::read_mask(p("pred.vol"))?;
        let counts = evalkit::confusion(&pred, &entry.gt, &entry.lung)?;
        let bright = if cfg.eval.bright_voxel {
            let prob = vol3::read_volume(p("prob.vol"))?;
            Some(evalkit::bright_voxel_eval(
                &prob,
                &entry.gt,
                &entry.input,
                &entry.lung,
                cfg.run.tau,
                cfg.net.prob_threshold,
            )?)
        } else {
            None
        };
        reports.push(CaseReport {
            case_id: entry.stem.clone(),
            dsc: counts.dsc(),
            psc: counts.psc(),
            sen: counts.sen(),
            bright,
        });

        let naive = vol3::bright_mask(&entry.input, cfg.run.tau)?.and(&entry.lung)?;
        baseline.push(evalkit::confusion(&naive, &entry.gt, &entry.lung)?.dsc());
    }
    evalkit::write_report_files(&cfg.paths.report_dir, &reports, cfg.eval.svg_histogram)?;
    let baseline_csv: String = std::iter::once("case_id,baseline_dsc\n".to_string())
        .chain(holdout.iter().zip(&baseline).map(|(e, d)| {
            format!("{},{}\n", e.stem, d.map(|v| format!("{v:.6}")).unwrap_or_default())
        }))
        .collect();
    let baseline_path = cfg.paths.report_dir.join("baseline.csv");
    fs::write(&baseline_path, baseline_csv).map_err(|e| io_err(&baseline_path, e))?;
    Ok(EvalOutcome { reports, baseline_dsc: baseline })
}

#[derive(Clone, Copy, Debug)]
pub struct PipelineSummary {
    pub cases: usize,
    pub mean_dsc: f64,
    pub mean_psc: f64,
    pub mean_sen: f64,
    pub baseline_mean_dsc: f64,
    pub margin: f64,
}

/// synth -> train -> infer -> eval, then gate checks.
pub fn cmd_pipeline(cfg: &RunConfig, emit_intermediates: bool) -> CliResult<PipelineSummary> {
    cmd_synth(cfg).map_err(|e| e.stage("synth"))?;
    cmd_train(cfg).map_err(|e| e.stage("train"))?;
    cmd_infer(cfg, emit_intermediates).map_err(|e| e.stage("infer"))?;
    let outcome = cmd_eval(cfg).map_err(|e| e.stage("eval"))?;

    let mean = |vals: Vec<Option<f64>>| {
        evalkit::aggregate(vals).map(|s| s.mean).unwrap_or(f64::NAN)
    };
    let summary = PipelineSummary {
        cases: outcome.reports.len(),
        mean_dsc: mean(outcome.reports.iter().map(|r| r.dsc).collect()),
        mean_psc: mean(outcome.reports.iter().map(|r| r.psc).collect()),
        mean_sen: mean(outcome.reports.iter().map(|r| r.sen).collect()),
        baseline_mean_dsc: mean(outcome.baseline_dsc.clone()),
        margin: 0.0,
    };
    let summary = PipelineSummary {
        margin: summary.mean_dsc - summary.baseline_mean_dsc,
        ..summary
    };

    let path = cfg.paths.report_dir.join("pipeline_summary.csv");
    let text = format!(
        "metric,value\ncases,{}\nmean_dsc,{:.6}\nmean_psc,{:.6}\nmean_sen,{:.6}\nbaseline_mean_dsc,{:.6}\nmargin_over_baseline,{:.6}\n",
        summary.cases,
        summary.mean_dsc,
        summary.mean_psc,
        summary.mean_sen,
        summary.baseline_mean_dsc,
        summary.margin
    );
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;

    if let Some(min) = cfg.gates.dsc_min {
        if !(summary.mean_dsc >= min) {
            return Err(CliError::Gate(format!(
                "mean DSC {:.4} below gate dsc_min {min}",
                summary.mean_dsc
            )));
        }
    }
    if let Some(min) = cfg.gates.baseline_margin_min {
        if !(summary.margin >= min) {
            return Err(CliError::Gate(format!(
                "margin over threshold baseline {:.4} below gate {min}",
                summary.margin
            )));
        }
    }
    Ok(summary)
}
