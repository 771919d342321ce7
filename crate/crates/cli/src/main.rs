mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ntfa::analysis::{fc_classify, fc_matrix, mvpa_run, CvScheme, LabeledFeatures, MvpaOptions, MvpaResult};
use ntfa::baselines::{htfa_fit, htfa_log_predictive, pca_timeavg_embed};
use ntfa::data::{BlockType, StudyDataset};
use ntfa::diffcore::Tensor;
use ntfa::evaluation::{heldout_split, log_predictive_bound, ModelKind};
use ntfa::inference::fit;
use ntfa::io::{
    embeddings_svg, export_embeddings, load_archive, load_dataset, load_dataset_labeled, read_json, save_archive,
    save_dataset_labeled, write_embeddings_csv, write_json, DatasetLabels, FitRecord, Metrics, ModelArchive,
};
use ntfa::model::GenerativeConfig;
use ntfa::synth::{generate_synthetic, SynthDesign};
use ntfa::Error;

use config::CliConfig;

#[derive(Parser, Debug)]
#[command(name = "ntfa", version, about = "Neural topographic factor analysis")]
struct Cli {
    /// Master seed for synthesis, training and evaluation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file with `seed`, `[train]`, `[model]` and `[eval]` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic study with known embeddings.
    Synth {
        /// `default` or a JSON design file.
        #[arg(long, default_value = "default")]
        design: String,
        #[arg(long)]
        out: PathBuf,
        /// Override the design's voxel count.
        #[arg(long)]
        voxels: Option<usize>,
    },
    /// Fit the model and write an archive.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train on the diagonal training split only.
        #[arg(long)]
        heldout: bool,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Held-out log predictive bound of a fitted model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        particles: Option<usize>,
    },
    /// Export embedding means and scales as CSV and SVG.
    Embed {
        #[arg(long)]
        model: PathBuf,
        /// Dataset whose labels name the rows.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Cross-validated classification of stimulus labels.
    Mvpa {
        #[arg(long)]
        data: PathBuf,
        /// Use time-averaged weights of this model instead of voxels.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Voxels kept by ANOVA in each training fold.
        #[arg(long, default_value_t = 500)]
        select: usize,
        #[command(flatten)]
        cv: CvFlags,
    },
    /// Classification from factor connectivity matrices.
    Fc {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        cv: CvFlags,
    },
    /// Comparison models.
    Baseline {
        #[command(subcommand)]
        which: Baseline,
    },
}

#[derive(Subcommand, Debug)]
enum Baseline {
    /// Two-component PCA of time-averaged trials, as CSV.
    Pca {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit HTFA on the training split and score the held-out trials.
    Htfa {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        particles: Option<usize>,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
}

#[derive(Args, Debug)]
struct ModelFlags {
    #[arg(long)]
    factors: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    particles_train: Option<usize>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SchemeArg {
    Runs,
    Kfold,
}

#[derive(Args, Debug)]
struct CvFlags {
    #[arg(long, value_enum, default_value_t = SchemeArg::Runs)]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    /// Drop rest blocks before classifying.
    #[arg(long)]
    task_only: bool,
    /// CSV of class, fold, AUC.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    let seed = cfg.resolve_seed(cli.seed);
    match cli.command {
        Command::Synth { design, out, voxels } => synth(&design, &out, voxels, seed),
        Command::Fit {
            data,
            out,
            heldout,
            model,
            train,
        } => {
            apply_flags(&mut cfg, &model, &train);
            fit_cmd(&data, &out, heldout, &cfg)
        }
        Command::Eval {
            model,
            data,
            out,
            particles,
        } => eval_cmd(&model, &data, &out, particles.unwrap_or(cfg.eval.particles), seed),
        Command::Embed { model, data, out, svg } => embed_cmd(&model, data.as_deref(), &out, svg.as_deref()),
        Command::Mvpa { data, model, select, cv } => mvpa_cmd(&data, model.as_deref(), select, &cv, seed),
        Command::Fc { data, model, cv } => fc_cmd(&data, &model, &cv, seed),
        Command::Baseline { which } => match which {
            Baseline::Pca { data, out } => pca_cmd(&data, &out),
            Baseline::Htfa {
                data,
                out,
                particles,
                model,
                train,
            } => {
                apply_flags(&mut cfg, &model, &train);
                let particles = particles.unwrap_or(cfg.eval.particles);
                htfa_cmd(&data, &out, particles, &cfg)
            }
        },
    }
}

fn apply_flags(cfg: &mut CliConfig, model: &ModelFlags, train: &TrainFlags) {
    if let Some(k) = model.factors {
        cfg.model.factors = k;
    }
    if let Some(d) = model.embedding_dim {
        cfg.model.embedding_dim = d;
    }
    if let Some(e) = train.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = train.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(l) = train.particles_train {
        cfg.train.particles = l;
    }
}

fn synth(design: &str, out: &Path, voxels: Option<usize>, seed: u64) -> CliResult {
    let mut d: SynthDesign = if design == "default" {
        SynthDesign::default()
    } else {
        read_json(Path::new(design))?
    };
    if let Some(v) = voxels {
        d.voxels = v;
    }
    d.seed = seed;
    let (dataset, truth) = generate_synthetic(&d)?;
    let labels = DatasetLabels {
        participants: truth.participant_groups.iter().map(|g| format!("group{g}")).collect(),
        stimuli: truth
            .stimulus_categories
            .iter()
            .map(|c| c.map_or("rest".to_string(), |c| format!("category{c}")))
            .collect(),
    };
    save_dataset_labeled(out, &dataset, &labels)?;
    write_json(&out.join("design.json"), &d)?;
    write_json(&out.join("ground_truth.json"), &truth)?;
    println!(
        "wrote {} trials ({} participants, {} stimuli, {} voxels) to {}",
        dataset.len(),
        dataset.participants,
        dataset.stimuli,
        dataset.voxels(),
        out.display()
    );
    Ok(())
}

fn fit_cmd(data: &Path, out: &Path, heldout: bool, cfg: &CliConfig) -> CliResult {
    let dataset = load_dataset(data)?;
    let train_trials: Vec<usize> = if heldout {
        heldout_split(&dataset)?.train
    } else {
        (0..dataset.len()).collect()
    };
    let train_set = dataset.subset(&train_trials);
    let model = GenerativeConfig::new(cfg.model.factors, cfg.model.embedding_dim, dataset.voxels())?;
    let result = fit(&train_set, &cfg.train, model)?;
    let archive = ModelArchive {
        record: FitRecord {
            model,
            train: cfg.train.clone(),
            dataset: Some(data.display().to_string()),
            train_trials,
        },
        params: result.params,
        state: result.state,
        trace: result.trace,
    };
    save_archive(out, &archive)?;
    if let Some(last) = archive.trace.losses.last() {
        println!("final loss {last:.6} after {} epochs", archive.trace.losses.len());
    }
    Ok(())
}

fn eval_cmd(model: &Path, data: &Path, out: &Path, particles: usize, seed: u64) -> CliResult {
    let archive = load_archive(model)?;
    let dataset = load_dataset(data)?;
    let split = heldout_split(&dataset)?;
    if split.test.iter().any(|n| archive.record.train_trials.contains(n)) {
        eprintln!("warning: the model was fitted on some held-out trials");
    }
    let bound = log_predictive_bound(&archive.params, &archive.state, &dataset, &split.test, particles, seed)?;
    let metrics = Metrics {
        model: ModelKind::Ntfa,
        factors: archive.record.model.factors,
        embedding_dim: Some(archive.record.model.embedding_dim),
        train: archive.record.train.clone(),
        parameter_count: archive.params.parameter_count() + archive.state.parameter_count(),
        particles,
        seed,
        train_trials: archive.record.train_trials.clone(),
        test_trials: split.test,
        final_loss: archive.trace.losses.last().copied(),
        log_predictive: bound.total,
        log_predictive_per_trial: bound.per_trial,
    };
    write_json(out, &metrics)?;
    println!("log predictive bound {:.6e}", metrics.log_predictive);
    Ok(())
}

fn embed_cmd(model: &Path, data: Option<&Path>, out: &Path, svg: Option<&Path>) -> CliResult {
    let archive = load_archive(model)?;
    let labels = match data {
        Some(d) => load_dataset_labeled(d)?.1,
        None => DatasetLabels::default(),
    };
    let rows = export_embeddings(&archive.state, &labels);
    write_embeddings_csv(out, &rows)?;
    if let Some(path) = svg {
        fs::write(path, embeddings_svg(&rows)).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Class ids from the sorted distinct stimulus labels.
fn stimulus_classes(dataset: &StudyDataset, labels: &DatasetLabels, trials: &[usize]) -> (Vec<usize>, Vec<String>) {
    let names: Vec<String> = trials.iter().map(|&n| labels.stimulus(dataset.trials[n].stimulus)).collect();
    let ids: BTreeMap<&String, usize> = names
        .iter()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n, i))
        .collect();
    let classes = names.iter().map(|n| ids[n]).collect();
    let mut ordered: Vec<(&String, usize)> = ids.into_iter().collect();
    ordered.sort_by_key(|&(_, i)| i);
    (classes, ordered.into_iter().map(|(n, _)| n.clone()).collect())
}

fn cv_options(cv: &CvFlags, seed: u64, select: Option<usize>) -> MvpaOptions {
    MvpaOptions {
        scheme: match cv.scheme {
            SchemeArg::Runs => CvScheme::LeaveOneRunOut,
            SchemeArg::Kfold => CvScheme::StratifiedKFold(cv.folds),
        },
        select,
        seed,
        ..MvpaOptions::default()
    }
}

fn keep_trials(dataset: &StudyDataset, candidates: &[usize], task_only: bool) -> Vec<(usize, usize)> {
    candidates
        .iter()
        .enumerate()
        .filter(|&(_, &n)| !task_only || dataset.trials[n].block == BlockType::Task)
        .map(|(i, &n)| (i, n))
        .collect()
}

fn report(result: &MvpaResult, names: &[String], out: Option<&Path>) -> CliResult {
    for c in &result.classes {
        println!("{}\tAUC {:.4} ± {:.4} over {} folds", names[c.class], c.mean, c.std, c.folds);
    }
    if let Some(path) = out {
        fs::write(path, result.to_csv()).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

fn mvpa_cmd(data: &Path, model: Option<&Path>, select: usize, cv: &CvFlags, seed: u64) -> CliResult {
    let (dataset, labels) = load_dataset_labeled(data)?;
    let (rows, kept, selection) = match model {
        Some(m) => {
            let archive = load_archive(m)?;
            let weights = archive.state.mean_weight_rows();
            let kept = keep_trials(&dataset, &archive.record.train_trials, cv.task_only);
            let rows = kept.iter().map(|&(i, _)| weights[i].clone()).collect();
            (rows, kept, None)
        }
        None => {
            let all: Vec<usize> = (0..dataset.len()).collect();
            let kept = keep_trials(&dataset, &all, cv.task_only);
            let rows = kept.iter().map(|&(_, n)| dataset.trials[n].time_average()).collect();
            (rows, kept, Some(select))
        }
    };
    let trials: Vec<usize> = kept.iter().map(|&(_, n)| n).collect();
    let (classes, names) = stimulus_classes(&dataset, &labels, &trials);
    let groups = trials.iter().map(|&n| dataset.trials[n].run).collect();
    let features = LabeledFeatures::new(rows, classes, groups)?;
    let result = mvpa_run(&features, &cv_options(cv, seed, selection))?;
    report(&result, &names, cv.out.as_deref())
}

fn fc_cmd(data: &Path, model: &Path, cv: &CvFlags, seed: u64) -> CliResult {
    let (dataset, labels) = load_dataset_labeled(data)?;
    let archive = load_archive(model)?;
    let kept = keep_trials(&dataset, &archive.record.train_trials, cv.task_only);
    let fcs = kept
        .iter()
        .map(|&(i, _)| fc_matrix(&archive.state.weights[i].mean))
        .collect::<Result<Vec<Tensor>, Error>>()?;
    let trials: Vec<usize> = kept.iter().map(|&(_, n)| n).collect();
    let (classes, names) = stimulus_classes(&dataset, &labels, &trials);
    let groups: Vec<usize> = trials.iter().map(|&n| dataset.trials[n].run).collect();
    let result = fc_classify(&fcs, &classes, &groups, &cv_options(cv, seed, None))?;
    report(&result, &names, cv.out.as_deref())
}

fn pca_cmd(data: &Path, out: &Path) -> CliResult {
    let (dataset, labels) = load_dataset_labeled(data)?;
    let e = pca_timeavg_embed(&dataset)?;
    let mut csv = String::from("trial,participant,stimulus,label,pc1,pc2\n");
    for (n, t) in dataset.trials.iter().enumerate() {
        csv.push_str(&format!(
            "{n},{},{},{},{},{}\n",
            t.participant,
            t.stimulus,
            labels.stimulus(t.stimulus),
            e.at(n, 0),
            e.at(n, 1)
        ));
    }
    fs::write(out, csv).map_err(|e| io_err(out, e))
}

fn htfa_cmd(data: &Path, out: &Path, particles: usize, cfg: &CliConfig) -> CliResult {
    let dataset = load_dataset(data)?;
    let split = heldout_split(&dataset)?;
    let train_set = dataset.subset(&split.train);
    let result = htfa_fit(&train_set, cfg.model.factors, &cfg.train)?;
    let bound = htfa_log_predictive(&result.state, &dataset, &split.test, particles, cfg.train.seed)?;
    let metrics = Metrics {
        model: ModelKind::Htfa,
        factors: cfg.model.factors,
        embedding_dim: None,
        train: cfg.train.clone(),
        parameter_count: result.state.parameter_count(),
        particles,
        seed: cfg.train.seed,
        train_trials: split.train,
        test_trials: split.test,
        final_loss: result.trace.losses.last().copied(),
        log_predictive: bound.total,
        log_predictive_per_trial: bound.per_trial,
    };
    write_json(out, &metrics)?;
    println!("log predictive bound {:.6e}", metrics.log_predictive);
    Ok(())
}
