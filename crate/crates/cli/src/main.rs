//! `sgbench`: batch front end for the scene-graph benchmark engine.
//!
//! Exit codes: 0 success, 1 validation or data error, 2 I/O or argument error.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sgbench_core::datamodel::{
    parse_dataset, parse_predictions, read_manifest, serialize_dataset, serialize_predictions, validate, Dataset,
    PredictedObject, PredictedScene, PredictionSet, ScoredRelation, Split,
};
use sgbench_core::ingest::{
    convert_to_hbb, tile_dataset, DEFAULT_KEEP_FRACTION, DEFAULT_TILE_SIZE, DEFAULT_TILE_STRIDE,
};
use sgbench_core::metrics::{
    evaluate_detections, evaluate_sgg, parse_k_values, DetectionConfig, MatchConfig, SggTask, DEFAULT_IOU_THRESHOLD,
};
use sgbench_core::pairing::{label_pairs, sample_pairs, DEFAULT_MAX_NEG, DEFAULT_MAX_POS};
use sgbench_core::scorer::{
    fit_frequency_prior, predict_triplets, refine_labels, train_linear, FrequencyPrior, LinearHyperparams,
    LinearScorer, LossWeights, PredictConfig, DEFAULT_ALPHA, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE,
};
use sgbench_core::stats::{compute_stats, emit_report, split_table_csv, CsvTable, ReportFormat};
use sgbench_core::synth::{
    default_rules, generate, Rule, SynthConfig, DEFAULT_CLUSTER_PROB, DEFAULT_IMAGE_SIZE, DEFAULT_MAX_ASPECT,
    DEFAULT_MAX_OBJECTS, DEFAULT_MAX_SIDE, DEFAULT_MIN_OBJECTS, DEFAULT_MIN_SIDE, DEFAULT_TAIL_SKEW,
};

#[derive(Parser)]
#[command(name = "sgbench", version, about = "Scene-graph benchmark engine for oriented-box imagery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a manifest and list every violation.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Category counts, per-image histograms, size classes and co-occurrence.
    Stats {
        /// One manifest per split; repeat for side-by-side split tables.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Cut scenes into overlapping square tiles.
    Tile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
        tile_size: u32,
        #[arg(long, default_value_t = DEFAULT_TILE_STRIDE)]
        stride: u32,
        #[arg(long, default_value_t = DEFAULT_KEEP_FRACTION)]
        keep_fraction: f64,
    },
    /// Replace every oriented box by its enclosing axis-aligned box.
    ConvertHbb {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Label ordered object pairs and draw a seeded training sample.
    Pairs {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_POS)]
        max_pos: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_NEG)]
        max_neg: usize,
    },
    /// Fit the smoothed class-pair frequency prior.
    FitPrior {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Train the linear relatedness, refinement and predicate heads.
    TrainLinear(TrainArgs),
    /// Score triplets for every scene of a manifest.
    Predict(PredictArgs),
    /// Per-class AP and mAP of a detection prediction file.
    EvalDet {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        /// Count classes without ground truth as AP 0 in the mean.
        #[arg(long)]
        include_empty: bool,
    },
    /// R@K and mR@K of a relation prediction file.
    EvalSgg {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, default_value = "20,50,100,500")]
        k: String,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        #[arg(long)]
        no_graph_constraint: bool,
        /// Count predicates without ground truth as recall 0 in the mean.
        #[arg(long)]
        include_empty: bool,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    images: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_IMAGE_SIZE)]
    width: u32,
    #[arg(long, default_value_t = DEFAULT_IMAGE_SIZE)]
    height: u32,
    #[arg(long, default_value_t = DEFAULT_MIN_OBJECTS)]
    min_objects: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_OBJECTS)]
    max_objects: usize,
    #[arg(long, default_value_t = DEFAULT_TAIL_SKEW)]
    tail_skew: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_SIDE)]
    min_side: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_SIDE)]
    max_side: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ASPECT)]
    max_aspect: f64,
    #[arg(long, default_value_t = DEFAULT_CLUSTER_PROB)]
    cluster_prob: f64,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    split: SplitArg,
    /// JSON array of rules; defaults to the built-in class-pair table.
    #[arg(long)]
    rules: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    lr: f64,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_POS)]
    max_pos: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_NEG)]
    max_neg: usize,
    #[arg(long, default_value_t = 1.0)]
    w_relpn: f64,
    #[arg(long, default_value_t = 1.0)]
    w_refine: f64,
    #[arg(long, default_value_t = 1.0)]
    w_relation: f64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    prior: PathBuf,
    #[arg(long)]
    linear: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Prediction file whose objects are the detections (sgdet only).
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Keep only the M most related pairs per image.
    #[arg(long)]
    top_m_pairs: Option<usize>,
    #[arg(long)]
    no_graph_constraint: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Predcls,
    Sgcls,
    Sgdet,
}

impl From<TaskArg> for SggTask {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Predcls => SggTask::PredCls,
            TaskArg::Sgcls => SggTask::SgCls,
            TaskArg::Sgdet => SggTask::SgDet,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

enum Failure {
    Data(anyhow::Error),
    Usage(anyhow::Error),
}

type Outcome<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn data(self) -> Outcome<T>;
    fn usage(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn data(self) -> Outcome<T> {
        self.map_err(|e| Failure::Data(e.into()))
    }

    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

fn read(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display())).usage()
}

fn load_dataset(path: &Path) -> Outcome<Dataset> {
    parse_dataset(&read(path)?).with_context(|| format!("loading {}", path.display())).data()
}

fn load_predictions(path: &Path) -> Outcome<PredictionSet> {
    parse_predictions(&read(path)?).with_context(|| format!("loading {}", path.display())).data()
}

/// Write-then-rename so a reader never sees a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Outcome {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let result = (|| -> anyhow::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path)?;
        Ok(())
    })();
    result.with_context(|| format!("writing {}", path.display())).usage()
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("report serialization is infallible")
}

fn check_unit(name: &str, v: f64) -> Outcome {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Failure::Usage(anyhow!("--{name} must lie in [0, 1], got {v}")))
    }
}

fn run_validate(input: &Path) -> Outcome {
    let dataset = read_manifest(&read(input)?).with_context(|| format!("loading {}", input.display())).data()?;
    let report = validate(&dataset);
    for v in &report.violations {
        println!("{v}");
    }
    println!("{} violations", report.violations.len());
    if report.is_clean() {
        Ok(())
    } else {
        Err(Failure::Data(anyhow!("{} failed validation", input.display())))
    }
}

fn run_stats(inputs: &[PathBuf], out_dir: &Path) -> Outcome {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .usage()?;
    let mut reports = Vec::new();
    for input in inputs {
        let dataset = load_dataset(input)?;
        let report = compute_stats(&dataset);
        let split = report.split.as_str();
        write_atomic(&out_dir.join(format!("{split}_report.json")), &emit_report(&report, ReportFormat::Json))?;
        for table in CsvTable::ALL {
            let name = format!("{split}_{}.csv", table.file_stem());
            write_atomic(&out_dir.join(name), &emit_report(&report, ReportFormat::Csv(table)))?;
        }
        println!(
            "{split}: {} images, {} objects, {} relations",
            report.n_images, report.n_objects, report.n_relations
        );
        reports.push(report);
    }
    if reports.len() > 1 {
        let refs: Vec<_> = reports.iter().collect();
        for table in [CsvTable::Objects, CsvTable::Relations] {
            let csv = split_table_csv(&refs, table).data()?;
            write_atomic(&out_dir.join(format!("{}_by_split.csv", table.file_stem())), &csv)?;
        }
    }
    Ok(())
}

fn run_synth(a: &SynthArgs) -> Outcome {
    let mut cfg = SynthConfig::new(a.images, a.seed);
    cfg.width = a.width;
    cfg.height = a.height;
    cfg.min_objects = a.min_objects;
    cfg.max_objects = a.max_objects;
    cfg.tail_skew = a.tail_skew;
    cfg.min_side = a.min_side;
    cfg.max_side = a.max_side;
    cfg.max_aspect = a.max_aspect;
    cfg.cluster_prob = a.cluster_prob;
    cfg.split = a.split.into();
    cfg.rules = match &a.rules {
        Some(path) => serde_json::from_slice::<Vec<Rule>>(&read(path)?)
            .with_context(|| format!("parsing rules {}", path.display()))
            .usage()?,
        None => default_rules(&cfg.registry, a.width, a.height),
    };
    let dataset = generate(&cfg).usage()?;
    write_atomic(&a.output, serialize_dataset(&dataset).as_bytes())?;
    println!(
        "{} images, {} objects, {} relations",
        dataset.scenes.len(),
        dataset.num_objects(),
        dataset.num_relations()
    );
    Ok(())
}

fn run_tile(input: &Path, output: &Path, size: u32, stride: u32, keep: f64) -> Outcome {
    check_unit("keep-fraction", keep)?;
    let dataset = load_dataset(input)?;
    let tiled = tile_dataset(&dataset, size, stride, keep).usage()?;
    write_atomic(output, serialize_dataset(&tiled).as_bytes())?;
    println!("{} tiles from {} images", tiled.scenes.len(), dataset.scenes.len());
    Ok(())
}

fn run_convert_hbb(input: &Path, output: &Path) -> Outcome {
    let dataset = load_dataset(input)?;
    write_atomic(output, serialize_dataset(&convert_to_hbb(&dataset)).as_bytes())
}

#[derive(Serialize)]
struct ImagePairs {
    id: String,
    positives: Vec<[u32; 2]>,
    negatives: Vec<[u32; 2]>,
}

#[derive(Serialize)]
struct PairsFile {
    seed: u64,
    max_pos: usize,
    max_neg: usize,
    images: Vec<ImagePairs>,
}

fn run_pairs(input: &Path, output: &Path, seed: u64, max_pos: usize, max_neg: usize) -> Outcome {
    let dataset = load_dataset(input)?;
    let images = dataset
        .scenes
        .iter()
        .enumerate()
        .map(|(i, scene)| {
            let labels = label_pairs(scene);
            let sample = sample_pairs(&labels, max_pos, max_neg, seed.wrapping_add(i as u64));
            let ids = |pairs: &[(usize, usize)]| -> Vec<[u32; 2]> {
                pairs.iter().map(|&(s, o)| [scene.objects[s].id, scene.objects[o].id]).collect()
            };
            ImagePairs {
                id: scene.image_id.clone(),
                positives: ids(&sample.positives),
                negatives: ids(&sample.negatives),
            }
        })
        .collect();
    write_atomic(
        output,
        &to_json(&PairsFile {
            seed,
            max_pos,
            max_neg,
            images,
        }),
    )
}

fn run_fit_prior(input: &Path, output: &Path, alpha: f64) -> Outcome {
    let dataset = load_dataset(input)?;
    let prior = match fit_frequency_prior(&dataset, alpha) {
        Err(e @ sgbench_core::scorer::ScorerError::Alpha(_)) => return Err(Failure::Usage(e.into())),
        other => other.data()?,
    };
    write_atomic(output, prior.to_json().as_bytes())
}

fn run_train(a: &TrainArgs) -> Outcome {
    let weights = LossWeights {
        relpn: a.w_relpn,
        refine: a.w_refine,
        relation: a.w_relation,
    };
    weights.check().usage()?;
    if !(a.lr.is_finite() && a.lr >= 0.0) {
        return Err(Failure::Usage(anyhow!("--lr must be finite and >= 0, got {}", a.lr)));
    }
    let dataset = load_dataset(&a.input)?;
    let hp = LinearHyperparams {
        learning_rate: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        max_pos: a.max_pos,
        max_neg: a.max_neg,
        loss_weights: weights,
    };
    let scorer = train_linear(&dataset, &hp).data()?;
    write_atomic(&a.output, scorer.to_json().as_bytes())?;
    if let (Some(first), Some(last)) = (scorer.loss_history.first(), scorer.loss_history.last()) {
        println!("loss {:.6} -> {:.6}", first.total, last.total);
    }
    Ok(())
}

fn run_predict(a: &PredictArgs) -> Outcome {
    let task: SggTask = a.task.into();
    if task == SggTask::SgCls && a.linear.is_none() {
        return Err(Failure::Usage(anyhow!("sgcls needs --linear for object labels")));
    }
    if task == SggTask::SgDet && a.detections.is_none() {
        return Err(Failure::Usage(anyhow!("sgdet needs --detections")));
    }
    let dataset = load_dataset(&a.input)?;
    let prior = FrequencyPrior::from_json(&read(&a.prior)?, &dataset.registry)
        .with_context(|| format!("loading {}", a.prior.display()))
        .data()?;
    let linear = match &a.linear {
        Some(path) => Some(
            LinearScorer::from_json(&read(path)?, &dataset.registry)
                .with_context(|| format!("loading {}", path.display()))
                .data()?,
        ),
        None => None,
    };
    let detections: HashMap<String, Vec<PredictedObject>> = match &a.detections {
        Some(path) => load_predictions(path)?
            .scenes
            .into_iter()
            .map(|s| (s.image_id, s.objects))
            .collect(),
        None => HashMap::new(),
    };
    let cfg = PredictConfig {
        top_m_pairs: a.top_m_pairs,
        graph_constraint: !a.no_graph_constraint,
    };
    let mut scenes = Vec::with_capacity(dataset.scenes.len());
    for scene in &dataset.scenes {
        let (w, h) = (scene.width as f64, scene.height as f64);
        let objects: Vec<PredictedObject> = match task {
            SggTask::PredCls => scene
                .objects
                .iter()
                .map(|o| PredictedObject {
                    id: o.id,
                    category: o.category,
                    obb: o.obb,
                    truncated: o.truncated,
                    score: 1.0,
                })
                .collect(),
            SggTask::SgCls => {
                let boxes: Vec<_> = scene.objects.iter().map(|o| o.obb).collect();
                let labels = refine_labels(&boxes, w, h, linear.as_ref().expect("checked above"));
                scene
                    .objects
                    .iter()
                    .zip(labels)
                    .map(|(o, (category, score))| PredictedObject {
                        id: o.id,
                        category,
                        obb: o.obb,
                        truncated: o.truncated,
                        score,
                    })
                    .collect()
            }
            SggTask::SgDet => detections.get(&scene.image_id).cloned().unwrap_or_default(),
        };
        let triplets = predict_triplets(&objects, w, h, &prior, linear.as_ref(), &cfg).data()?;
        scenes.push(PredictedScene {
            image_id: scene.image_id.clone(),
            width: scene.width,
            height: scene.height,
            relations: triplets
                .iter()
                .map(|t| ScoredRelation {
                    subject: t.subject.id,
                    predicate: t.predicate,
                    object: t.object.id,
                    score: t.score,
                })
                .collect(),
            objects,
        });
    }
    let set = PredictionSet {
        registry: dataset.registry.clone(),
        split: dataset.split,
        scenes,
    };
    write_atomic(&a.output, serialize_predictions(&set).as_bytes())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn run_eval_det(gt: &Path, pred: &Path, output: &Path, csv: Option<&Path>, iou: f64, include_empty: bool) -> Outcome {
    check_unit("iou", iou)?;
    let (gt, pred) = (load_dataset(gt)?, load_predictions(pred)?);
    let cfg = DetectionConfig {
        iou_threshold: iou,
        include_empty,
    };
    let report = evaluate_detections(&gt, &pred, &cfg).data()?;
    write_atomic(output, &to_json(&report))?;
    if let Some(path) = csv {
        write_atomic(path, report.to_csv().as_bytes())?;
    }
    println!("mAP {}", fmt_opt(report.map));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_eval_sgg(
    gt: &Path,
    pred: &Path,
    output: &Path,
    csv: Option<&Path>,
    task: TaskArg,
    k: &str,
    iou: f64,
    graph_constraint: bool,
    include_empty: bool,
) -> Outcome {
    let k_values = parse_k_values(k).usage()?;
    check_unit("iou", iou)?;
    let cfg = MatchConfig {
        iou_threshold: iou,
        k_values,
        graph_constraint,
        task: task.into(),
        include_empty,
    };
    let (gt, pred) = (load_dataset(gt)?, load_predictions(pred)?);
    let report = evaluate_sgg(&gt, &pred, &cfg).data()?;
    write_atomic(output, &to_json(&report))?;
    if let Some(path) = csv {
        write_atomic(path, report.to_csv().as_bytes())?;
    }
    for (i, k) in report.config.k_values.iter().enumerate() {
        println!(
            "R@{k} {:.4}  mR@{k} {}",
            report.recall_at_k[i],
            fmt_opt(report.mean_recall_at_k[i])
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Validate { input } => run_validate(&input),
        Command::Stats { input, out_dir } => run_stats(&input, &out_dir),
        Command::Synth(a) => run_synth(&a),
        Command::Tile {
            input,
            output,
            tile_size,
            stride,
            keep_fraction,
        } => run_tile(&input, &output, tile_size, stride, keep_fraction),
        Command::ConvertHbb { input, output } => run_convert_hbb(&input, &output),
        Command::Pairs {
            input,
            output,
            seed,
            max_pos,
            max_neg,
        } => run_pairs(&input, &output, seed, max_pos, max_neg),
        Command::FitPrior { input, output, alpha } => run_fit_prior(&input, &output, alpha),
        Command::TrainLinear(a) => run_train(&a),
        Command::Predict(a) => run_predict(&a),
        Command::EvalDet {
            gt,
            pred,
            output,
            csv,
            iou,
            include_empty,
        } => run_eval_det(&gt, &pred, &output, csv.as_deref(), iou, include_empty),
        Command::EvalSgg {
            gt,
            pred,
            output,
            csv,
            task,
            k,
            iou,
            no_graph_constraint,
            include_empty,
        } => run_eval_sgg(
            &gt,
            &pred,
            &output,
            csv.as_deref(),
            task,
            &k,
            iou,
            !no_graph_constraint,
            include_empty,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
