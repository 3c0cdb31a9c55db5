//! `choir canonicalize`: rotate clouds into the model's canonical frame.

use std::path::{Path, PathBuf};

use choir_core::checkpoint::load_model;
use choir_core::pointcloud::io::{load, save, CloudFormat};
use choir_core::{
    rng, CharacteristicOrientationPredictor, Error, KnnMode, PointCloud, Precision, Result,
    Scalar,
};

use crate::meta::RunMetadata;
use crate::{CmdResult, Failure};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Cloud files to canonicalize (.xyz or .cpts).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Model checkpoint (as written by train).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory; files keep their name and format.
    #[arg(long)]
    pub out: PathBuf,
    /// Resample each cloud to this many points before predicting.
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed for the optional resampling (default 0).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the checkpoint's kNN regime.
    #[arg(long)]
    pub knn_mode: Option<KnnMode>,
    /// Numeric precision: single or double.
    #[arg(long, default_value = "double")]
    pub precision: Precision,
}

pub fn run(args: Args) -> CmdResult {
    match args.precision {
        Precision::Single => run_typed::<f32>(&args),
        Precision::Double => run_typed::<f64>(&args),
    }
}

fn run_typed<S: Scalar>(args: &Args) -> CmdResult {
    let mut model = load_model::<S>(&args.checkpoint)?;
    if let Some(m) = args.knn_mode {
        model.knn_mode = m;
    }
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    let meta = RunMetadata::start(
        "canonicalize",
        serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "inputs": args.inputs.len(),
            "n": args.n,
        }),
        args.seed,
        S::precision_name(),
        model.knn_mode.name(),
    );

    let mut failures = 0usize;
    for path in &args.inputs {
        match canonicalize_one(&model, path, args) {
            Ok((out_path, angle_deg)) => println!(
                "{}: rotation {:.3} deg -> {}",
                path.display(),
                angle_deg,
                out_path.display()
            ),
            Err(e) => {
                failures += 1;
                eprintln!("{}: {e}", path.display());
            }
        }
    }
    meta.finish_into(&args.out)?;
    if failures > 0 {
        return Err(Failure::Partial(format!(
            "{failures} of {} inputs failed",
            args.inputs.len()
        )));
    }
    println!(
        "canonicalized {} clouds into {}",
        args.inputs.len(),
        args.out.display()
    );
    Ok(())
}

/// The two paths name the same existing file.
fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn canonicalize_one<S: Scalar>(
    model: &CharacteristicOrientationPredictor<S>,
    path: &Path,
    args: &Args,
) -> Result<(PathBuf, f64)> {
    let format = CloudFormat::for_path(path)?;
    let pc: PointCloud<S> = load(path, format)?;
    let pc = pc.center();
    let pc = match args.n {
        Some(n) => {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            let mut rng = rng::stream("canonicalize", &[args.seed, rng::fnv1a(name.as_bytes())]);
            pc.resample(n, &mut rng)?.center()
        }
        None => pc,
    };
    let (canon, rotation) = model.canonicalize(&pc, None)?;
    let file_name = path.file_name().ok_or_else(|| Error::Config {
        message: format!("input '{}' has no file name", path.display()),
    })?;
    let out_path = args.out.join(file_name);
    if same_file(path, &out_path) {
        return Err(Error::Config {
            message: "output path would overwrite the input".into(),
        });
    }
    save(&out_path, &canon, format)?;
    Ok((out_path, rotation.angle().as_f64().to_degrees()))
}
