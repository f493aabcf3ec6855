mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use facepipe_core::eval::{roc, roc_csv, summarize, ScoreSet};
use facepipe_core::fusion::{Decision, FusionModel};
use facepipe_core::imaging::{load_pgm, save_pgm};
use facepipe_core::pipeline::{extract, train, PipelineConfig, TrainedPipeline};
use facepipe_core::preprocess::preprocess_chain;
use facepipe_core::subspace::SubspaceModel;
use facepipe_core::synthbench::{run_benchmark, BenchConfig, Dataset, VariantReport};
use facepipe_core::Image;

const FUSION_FILE: &str = "fusion.json";

#[derive(Parser)]
#[command(name = "facepipe", version, about = "Illumination-robust face verification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the preprocessing chain on every PGM in a directory.
    #[command(after_help = config_help())]
    Preprocess {
        /// Directory of input PGM files.
        #[arg(long)]
        input: PathBuf,
        /// Output directory; created if missing. Files keep their basenames.
        #[arg(long)]
        output: PathBuf,
        /// JSON config file [default: built-in defaults, see below]
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit the subspace and fusion models from a manifest of labelled images.
    #[command(after_help = config_help())]
    Train {
        /// CSV with `identity_id` and `image_path` columns; paths are
        /// relative to the manifest's directory.
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for the model files; created if missing.
        #[arg(long)]
        output: PathBuf,
        /// JSON config file [default: built-in defaults, see below]
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score a probe / gallery pair. Exit status 0 on ACCEPT, 2 on REJECT.
    #[command(after_help = config_help())]
    Verify {
        /// Directory written by `train`.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        /// Accept when the fused score is at least this; `-inf` accepts all.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        threshold: f64,
        /// JSON config used at training time [default: built-in defaults, see below]
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the synthetic benchmark and write its manifests, scores, ROC
    /// curves and summary.
    #[command(after_help = config_help())]
    Bench {
        /// Master seed [default: the config's `seed`, else 1]
        #[arg(long)]
        seed: Option<u64>,
        /// JSON config file [default: built-in defaults, see below]
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; created if missing.
        #[arg(long, default_value = "bench_out")]
        output: PathBuf,
    },
    /// Summarize a score CSV (`label` column 1 = genuine, 0 = impostor).
    ScoreEval {
        #[arg(long)]
        scores: PathBuf,
        /// Score column to evaluate.
        #[arg(long, default_value = "fused")]
        column: String,
        /// Also write the ROC curve as CSV here.
        #[arg(long)]
        roc_out: Option<PathBuf>,
    },
}

fn config_help() -> String {
    format!(
        "Config file: a flat JSON object; omitted keys keep their defaults.\n\
         `seed` and `dataset` are read by `bench` only. Defaults:\n{}",
        config::default_json()
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Preprocess { input, output, config } => cmd_preprocess(&input, &output, config.as_deref())?,
        Command::Train {
            manifest,
            output,
            config,
        } => cmd_train(&manifest, &output, config.as_deref())?,
        Command::Verify {
            models,
            probe,
            gallery,
            threshold,
            config,
        } => return cmd_verify(&models, &probe, &gallery, threshold, config.as_deref()),
        Command::Bench { seed, config, output } => cmd_bench(seed, config.as_deref(), &output)?,
        Command::ScoreEval {
            scores,
            column,
            roc_out,
        } => cmd_score_eval(&scores, &column, roc_out.as_deref())?,
    }
    Ok(ExitCode::SUCCESS)
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_pgm(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn require_dir(path: &Path) -> Result<()> {
    if !path.is_dir() {
        bail!("{} is not a directory", path.display());
    }
    Ok(())
}

fn cmd_preprocess(input: &Path, output: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = config::load(config)?.pipeline.preprocess;
    require_dir(input)?;
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .with_context(|| format!("listing {}", input.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")));
    files.sort();
    if files.is_empty() {
        bail!("no PGM files in {}", input.display());
    }
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    for path in &files {
        let start = Instant::now();
        let img = read_image(path)?;
        let out = preprocess_chain(&img, &cfg).with_context(|| format!("preprocessing {}", path.display()))?;
        let name = path.file_name().expect("listed files have names");
        write_atomic(&output.join(name), &save_pgm(&out))?;
        println!(
            "{}: {:.1} ms",
            name.to_string_lossy(),
            start.elapsed().as_secs_f64() * 1e3
        );
    }
    Ok(())
}

fn model_file(dir: &Path, tag: &str) -> PathBuf {
    dir.join(format!("kpca_{tag}.bin"))
}

/// Reads `(identity_id, image_path)` rows, resolving paths against the
/// manifest's directory.
fn read_manifest(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("manifest {} has no {name:?} column", path.display()))
    };
    let (id_col, path_col) = (col("identity_id")?, col("image_path")?);
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.with_context(|| format!("manifest {}", path.display()))?;
        rows.push((rec[id_col].to_string(), base.join(&rec[path_col])));
    }
    Ok(rows)
}

fn cmd_train(manifest: &Path, output: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = config::load(config)?.pipeline;
    let rows = read_manifest(manifest)?;
    let samples = rows
        .iter()
        .map(|(_, p)| extract(&read_image(p)?, &cfg).with_context(|| format!("extracting {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<&str> = rows.iter().map(|(id, _)| id.as_str()).collect();
    let trained = train(&samples, &labels, &cfg)?;

    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    for (d, m) in trained.descriptors.iter().zip(&trained.models) {
        write_atomic(&model_file(output, &d.tag()), &m.to_bytes())?;
        let total: f64 = m.eigenvalues.iter().sum();
        let head: Vec<String> = m.eigenvalues.iter().take(3).map(|v| format!("{v:.6e}")).collect();
        println!(
            "{d}: {} components, eigenvalue sum {total:.6e}, leading [{}]",
            m.n_components(),
            head.join(", ")
        );
    }
    write_atomic(&output.join(FUSION_FILE), trained.fusion.to_json()?.as_bytes())?;
    for (d, c) in trained.descriptors.iter().zip(&trained.fusion.classifiers) {
        println!(
            "{d}: same N({:.6}, {:.6e}), diff N({:.6}, {:.6e})",
            c.same.mean, c.same.var, c.diff.mean, c.diff.var
        );
    }
    Ok(())
}

fn load_trained(dir: &Path, cfg: &PipelineConfig) -> Result<TrainedPipeline> {
    require_dir(dir)?;
    let models = cfg
        .feature_selection
        .iter()
        .map(|d| {
            let path = model_file(dir, &d.tag());
            let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            SubspaceModel::from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let fusion_path = dir.join(FUSION_FILE);
    let text = fs::read_to_string(&fusion_path).with_context(|| format!("reading {}", fusion_path.display()))?;
    let fusion = FusionModel::from_json(&text).with_context(|| format!("loading {}", fusion_path.display()))?;
    if fusion.n_classifiers() != models.len() {
        bail!(
            "{} has {} classifiers, the config selects {}",
            fusion_path.display(),
            fusion.n_classifiers(),
            models.len()
        );
    }
    Ok(TrainedPipeline {
        descriptors: cfg.feature_selection.clone(),
        models,
        fusion,
    })
}

fn cmd_verify(models: &Path, probe: &Path, gallery: &Path, threshold: f64, config: Option<&Path>) -> Result<ExitCode> {
    if threshold.is_nan() {
        bail!("threshold is NaN");
    }
    let cfg = config::load(config)?.pipeline;
    let trained = load_trained(models, &cfg)?;
    let features = |p: &Path| -> Result<_> {
        extract(&read_image(p)?, &cfg).with_context(|| format!("extracting {}", p.display()))
    };
    let (a, b) = (features(probe)?, features(gallery)?);
    let v = trained.verify(&a, &b, threshold)?;
    for (d, s) in trained.descriptors.iter().zip(&v.scores) {
        println!("{d}: {s:.6}");
    }
    println!("fused: {:.6}", v.fused);
    println!("{}", v.decision);
    Ok(match v.decision {
        Decision::Accept => ExitCode::SUCCESS,
        Decision::Reject => ExitCode::from(2),
    })
}

fn write_dataset(dir: &Path, name: &str, ds: &Dataset) -> Result<()> {
    for e in &ds.entries {
        let path = dir.join(&e.image_path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_atomic(&path, &save_pgm(&e.image))?;
    }
    write_atomic(&dir.join(format!("manifest_{name}.csv")), ds.manifest_csv().as_bytes())
}

fn write_variant(dir: &Path, v: &VariantReport, test: &Dataset) -> Result<()> {
    write_atomic(
        &dir.join(format!("scores_{}.csv", v.name)),
        v.scores_csv(test).as_bytes(),
    )?;
    write_atomic(&dir.join(format!("roc_{}.csv", v.name)), v.roc_csv().as_bytes())
}

fn cmd_bench(seed: Option<u64>, config: Option<&Path>, output: &Path) -> Result<()> {
    let cfg = config::load(config)?;
    let defaults = BenchConfig::default();
    let bench = BenchConfig {
        seed: seed.or(cfg.seed).unwrap_or(defaults.seed),
        dataset: cfg.dataset.unwrap_or(defaults.dataset),
    };
    let report = run_benchmark(&bench, &cfg.pipeline)?;
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    write_dataset(output, "train", &report.train)?;
    write_dataset(output, "test", &report.test)?;
    for v in [&report.pipeline, &report.baseline, &report.reference] {
        write_variant(output, v, &report.test)?;
    }
    let summary = report.summary_text();
    write_atomic(&output.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

fn cmd_score_eval(scores: &Path, column: &str, roc_out: Option<&Path>) -> Result<()> {
    let mut rd = csv::Reader::from_path(scores).with_context(|| format!("reading {}", scores.display()))?;
    let headers = rd.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no {name:?} column", scores.display()))
    };
    let (label_col, score_col) = (find("label")?, find(column)?);
    let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let s: f64 = rec[score_col]
            .trim()
            .parse()
            .with_context(|| format!("{} line {row}: bad score", scores.display()))?;
        match rec[label_col].trim() {
            "1" => genuine.push(s),
            "0" => impostor.push(s),
            other => bail!("{} line {row}: label must be 0 or 1, got {other:?}", scores.display()),
        }
    }
    let set = ScoreSet::new(genuine, impostor);
    print!("{}", summarize(&set)?.render(column));
    if let Some(path) = roc_out {
        write_atomic(path, roc_csv(&roc(&set)?).as_bytes())?;
    }
    Ok(())
}
