//! `choir knn-audit`: rotation-induced kNN edge changes per precision.

use std::collections::BTreeMap;
use std::path::PathBuf;

use choir_core::pointcloud::io::{load, load_dataset, CloudFormat};
use choir_core::pointcloud::knn::knn_rotation_audit;
use choir_core::{rng, Error, KnnMode, PointCloud, Precision};

use crate::meta::RunMetadata;
use crate::{CmdResult, Failure};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Corpus manifest; alternative to positional files.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Individual cloud files (.xyz or .cpts).
    pub files: Vec<PathBuf>,
    /// Neighbors per point (default 20).
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Points per cloud; differing clouds are resampled (default 1024).
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    /// Random rotations per cloud (default 10).
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Base RNG seed (default 0).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// frozen reuses the unrotated graph, so every count is zero.
    #[arg(long, default_value = "adaptive")]
    pub knn_mode: KnnMode,
    /// Directory for audit.csv + metadata (default: print only).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct ClassAccum {
    clouds: usize,
    single_sum: f64,
    double_sum: f64,
}

pub fn run(args: Args) -> CmdResult {
    let mut clouds: Vec<PointCloud<f64>> = Vec::new();
    if let Some(manifest) = &args.data {
        clouds.extend(load_dataset::<f64>(manifest)?.instances);
    }
    for path in &args.files {
        clouds.push(load(path, CloudFormat::for_path(path)?)?);
    }
    if clouds.is_empty() {
        return Err(Failure::Usage(
            "provide --data MANIFEST or at least one cloud file".into(),
        ));
    }

    let frozen = args.knn_mode == KnnMode::Frozen;
    let mut per_class: BTreeMap<String, ClassAccum> = BTreeMap::new();
    let mut double_le_single = 0usize;
    let mut total_edges = 0usize;
    for pc in &clouds {
        let pc = if pc.points.len() == args.n {
            pc.clone()
        } else {
            let mut rng =
                rng::stream("knn-audit-resample", &[args.seed, rng::fnv1a(pc.instance_id.as_bytes())]);
            pc.resample(args.n, &mut rng)?.center()
        };
        // Identical streams so both precisions see the same rotations.
        let parts = [args.seed, rng::fnv1a(pc.instance_id.as_bytes())];
        let mut rng_single = rng::stream("knn-audit", &parts);
        let mut rng_double = rng::stream("knn-audit", &parts);
        let single = knn_rotation_audit(
            &pc,
            args.k,
            Precision::Single,
            frozen,
            args.trials,
            &mut rng_single,
        )?;
        let double = knn_rotation_audit(
            &pc,
            args.k,
            Precision::Double,
            frozen,
            args.trials,
            &mut rng_double,
        )?;
        total_edges = single.total_edges;
        if double.mean_wrong <= single.mean_wrong {
            double_le_single += 1;
        }
        let acc = per_class.entry(pc.class_id.clone()).or_insert(ClassAccum {
            clouds: 0,
            single_sum: 0.0,
            double_sum: 0.0,
        });
        acc.clouds += 1;
        acc.single_sum += single.mean_wrong;
        acc.double_sum += double.mean_wrong;
    }

    let fraction = double_le_single as f64 / clouds.len() as f64;
    let mut text = String::new();
    text.push_str(&format!("# k = {}\n", args.k));
    text.push_str(&format!("# n = {}\n", args.n));
    text.push_str(&format!("# trials = {}\n", args.trials));
    text.push_str(&format!("# seed = {}\n", args.seed));
    text.push_str(&format!("# knn_mode = {}\n", args.knn_mode.name()));
    text.push_str(&format!("# total_edges = {total_edges}\n"));
    text.push_str(&format!("# clouds = {}\n", clouds.len()));
    text.push_str(&format!("# fraction_double_le_single = {fraction:.6}\n"));
    text.push_str("class_id,n_clouds,mean_wrong_single,mean_wrong_double\n");
    for (class, acc) in &per_class {
        text.push_str(&format!(
            "{},{},{:.3},{:.3}\n",
            class,
            acc.clouds,
            acc.single_sum / acc.clouds as f64,
            acc.double_sum / acc.clouds as f64
        ));
    }
    print!("{text}");

    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
        let meta = RunMetadata::start(
            "knn-audit",
            serde_json::json!({
                "k": args.k,
                "n": args.n,
                "trials": args.trials,
                "clouds": clouds.len(),
                "fraction_double_le_single": fraction,
            }),
            args.seed,
            "both",
            args.knn_mode.name(),
        );
        let csv_path = out.join("audit.csv");
        std::fs::write(&csv_path, &text)
            .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
        meta.finish_into(out)?;
        println!("audit written to {}", out.display());
    }
    Ok(())
}
