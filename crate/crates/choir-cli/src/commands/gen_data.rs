//! `choir gen-data`: synthetic corpus generation.

use std::path::{Path, PathBuf};

use choir_core::config::{self, ConfigBag};
use choir_core::pointcloud::io::{save, save_manifest, CloudFormat, ManifestEntry};
use choir_core::pointcloud::synthetic::{generate_synthetic_corpus, CorpusSpec};
use choir_core::Error;

use crate::meta::RunMetadata;
use crate::{CmdResult, Failure};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Output directory for the clouds and manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of shape classes (default 3).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Instances per class (default 64).
    #[arg(long)]
    pub instances: Option<usize>,
    /// Points per cloud (default 1024).
    #[arg(long)]
    pub n: Option<usize>,
    /// Base RNG seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key = value` config file; flags override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write into an existing non-empty directory.
    #[arg(long)]
    pub force: bool,
}

fn dir_non_empty(path: &Path) -> bool {
    match std::fs::read_dir(path) {
        Ok(mut entries) => entries.next().is_some(),
        Err(_) => false,
    }
}

pub fn run(args: Args) -> CmdResult {
    let bag = match &args.config {
        Some(p) => ConfigBag::parse_file(p)?,
        None => ConfigBag::default(),
    };
    let mut spec = CorpusSpec::default();
    config::apply_corpus(&bag, &mut spec)?;
    if let Some(v) = args.classes {
        spec.classes = v;
    }
    if let Some(v) = args.instances {
        spec.instances_per_class = v;
    }
    if let Some(v) = args.n {
        spec.points = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }

    if args.out.exists() && dir_non_empty(&args.out) && !args.force {
        return Err(Failure::Core(Error::Config {
            message: format!(
                "output directory '{}' is not empty; pass --force to write into it",
                args.out.display()
            ),
        }));
    }
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;

    let meta = RunMetadata::start(
        "gen-data",
        serde_json::json!({
            "classes": spec.classes,
            "instances_per_class": spec.instances_per_class,
            "points": spec.points,
            "seed": spec.seed,
            "verify_symmetry": spec.verify_symmetry,
        }),
        spec.seed,
        "double",
        "n/a",
    );

    let clouds = generate_synthetic_corpus::<f64>(&spec)?;
    let mut entries = Vec::with_capacity(clouds.len());
    for pc in &clouds {
        let file = format!("{}.{}", pc.instance_id, CloudFormat::ChoirBinary.extension());
        save(&args.out.join(&file), pc, CloudFormat::ChoirBinary)?;
        entries.push(ManifestEntry {
            path: file,
            class_id: pc.class_id.clone(),
            instance_id: pc.instance_id.clone(),
        });
    }
    save_manifest(&args.out.join("manifest.csv"), &entries)?;
    meta.finish_into(&args.out)?;
    println!(
        "wrote {} clouds + manifest to {}",
        entries.len(),
        args.out.display()
    );
    Ok(())
}
