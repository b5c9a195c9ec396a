use normseg_core::evalkit::confusion;
use normseg_core::postseg::{segment_stages, PostprocessConfig};
use normseg_core::vol3::{bright_mask, read_mask, read_volume};
use std::path::Path;

fn main() {
    let corpus = Path::new("/tmp/bench_run/corpus/holdout");
    let preds = Path::new("/tmp/bench_run/preds");
    let mut stems: Vec<String> = std::fs::read_dir(corpus).unwrap()
        .filter_map(|e| e.ok().and_then(|e| e.file_name().into_string().ok()))
        .filter(|n| n.ends_with(".input.vol"))
        .map(|n| n.trim_end_matches(".input.vol").to_string()).collect();
    stems.sort();
    let cfg = PostprocessConfig::default();
    println!("{:<14} {:>6} {:>5} {:>6} {:>6} | {:>6} {:>6} {:>6} | fp_air fp_brt", "case", "|L|", "brf", "vesselsB", "lung", "oracle", "ours", "base");
    let (mut so, mut su, mut sb) = (0.0, 0.0, 0.0);
    for stem in &stems {
        let input = read_volume(corpus.join(format!("{stem}.input.vol"))).unwrap();
        let gt = read_mask(corpus.join(format!("{stem}.gt.vol"))).unwrap();
        let lung = read_mask(corpus.join(format!("{stem}.lung.vol"))).unwrap();
        let pred = read_mask(preds.join(format!("{stem}.pred.vol"))).unwrap();
        let bright = bright_mask(&input, 1.0/3.0).unwrap().and(&lung).unwrap();
        let brf = bright.and(&gt).unwrap().count() as f64 / gt.count().max(1) as f64;
        let vessels_b = bright.minus(&gt).unwrap().count();

        let oracle_healthy = bright.minus(&gt).unwrap();
        let ost = segment_stages(&input, &lung, &oracle_healthy, &cfg).unwrap();
        let o = confusion(&ost.prediction, &gt, &lung).unwrap();
        let u = confusion(&pred, &gt, &lung).unwrap();
        let b = confusion(&bright, &gt, &lung).unwrap();
        // our fp composition
        let fp_mask = pred.minus(&gt).unwrap();
        let fp_bright = fp_mask.and(&bright).unwrap().count();
        let fp_air = fp_mask.count() - fp_bright;
        println!("{:<14} {:>6} {:>5.2} {:>6} {:>6} | {:>6.3} {:>6.3} {:>6.3} | {:>6} {:>6}",
            stem, gt.count(), brf, vessels_b, lung.count(),
            o.dsc().unwrap_or(0.0), u.dsc().unwrap_or(0.0), b.dsc().unwrap_or(0.0), fp_air, fp_bright);
        so += o.dsc().unwrap_or(0.0); su += u.dsc().unwrap_or(0.0); sb += b.dsc().unwrap_or(0.0);
    }
    let n = stems.len() as f64;
    println!("means: oracle {:.3} ours {:.3} baseline {:.3}", so/n, su/n, sb/n);
}
