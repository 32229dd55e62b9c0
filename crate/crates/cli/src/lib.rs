//! Command-line surface: synthetic corpus generation, training, evaluation,
//! ablation grids and SVG reports.

pub mod config;
pub mod svg;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use reic::corpus::{generate_synthetic, Corpus, EmbeddingStore};
use reic::metrics::{precision_at_k, BridgeStats};
use reic::rltrain::{evaluate, train_with_dev, Checkpoint, EvalReport, MetricSet, PreparedCorpus, TrainHistory};

pub use config::{RunConfig, UsageError, RESOLVED_CONFIG};

pub const TRAIN_CORPUS: &str = "train.json";
pub const EVAL_CORPUS: &str = "eval.json";
pub const EMBEDDINGS: &str = "embeddings.bin";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const HISTORY_CSV: &str = "history.csv";
pub const EPOCHS_CSV: &str = "epochs.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const SELECTION_STATS_CSV: &str = "selection-stats.csv";
pub const PRECISION_CSV: &str = "precision-at-k.csv";
pub const ABLATION_CSV: &str = "ablation.csv";

pub const HISTORY_HEADER: [&str; 5] = ["step", "reward", "reward_ema", "re_loss", "epoch"];
pub const METRICS_HEADER: [&str; 7] = [
    "auc",
    "f1",
    "p_at_50",
    "p_at_100",
    "evidence_recall",
    "mean_bridge_mentions_pos",
    "mean_bridge_mentions_na",
];
pub const SELECTION_STATS_HEADER: [&str; 3] = ["group", "bridge_mentions", "paths"];

#[derive(Parser, Debug)]
#[command(name = "reic", version, about = "Reward-trained evidence sentence selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a planted-evidence corpus with train and eval splits.
    GenCorpus {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a selector and relation head; writes a checkpoint and history.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// reic | onestep | snippet | bridge
        #[arg(long)]
        selector: Option<String>,
        /// end2end | threshold
        #[arg(long)]
        head: Option<String>,
        /// argmax | sample decoding for per-epoch dev evaluation
        #[arg(long)]
        eval_mode: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained model on the corpus's eval split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory; defaults to the model directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// argmax | sample
        #[arg(long)]
        eval_mode: Option<String>,
        /// Override one key (evaluation keys such as eval_mode, extra_k).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Train and evaluate every combination of the swept values.
    Ablate {
        #[arg(long)]
        corpus: PathBuf,
        /// `key=v1,v2,...`; repeat to form a grid.
        #[arg(long, required = true)]
        sweep: Vec<String>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render SVG plots from history, ablation, metrics or selection-stats CSVs.
    Report {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit status for an error: 2 for usage problems, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        2
    } else {
        1
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| UsageError(e.to_string()))?;
    run(cli.command)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus { overrides, out } => gen_corpus(&overrides, &out),
        Command::Train {
            corpus,
            selector,
            head,
            eval_mode,
            overrides,
            out,
        } => {
            let mut cfg = layered(Some(&corpus), &overrides)?;
            for (key, value) in [("selector", selector), ("head", head), ("eval_mode", eval_mode)] {
                if let Some(v) = value {
                    cfg.set(key, &v)?;
                }
            }
            train_command(&cfg, &corpus, &out)
        }
        Command::Eval {
            model,
            corpus,
            out,
            eval_mode,
            set,
        } => {
            let mut cfg = RunConfig::from_text(&read_text(&model.join(RESOLVED_CONFIG))?)?;
            for s in &set {
                cfg.apply(s)?;
            }
            if let Some(mode) = eval_mode {
                cfg.set("eval_mode", &mode)?;
            }
            eval_command(&cfg, &model, &corpus, out.as_deref().unwrap_or(&model))
        }
        Command::Ablate {
            corpus,
            sweep,
            overrides,
            out,
        } => {
            let cfg = layered(Some(&corpus), &overrides)?;
            ablate_command(&cfg, &corpus, &sweep, &out)
        }
        Command::Report { inputs, out } => report_command(&inputs, &out).map(|_| ()),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Defaults, then the corpus's resolved config, then `--config`, then `--set`.
pub fn layered(corpus: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(dir) = corpus {
        let path = dir.join(RESOLVED_CONFIG);
        if path.exists() {
            cfg.merge_file(&path)?;
        }
    }
    if let Some(file) = &overrides.config {
        cfg.merge_file(file)?;
    }
    for s in &overrides.set {
        cfg.apply(s)?;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn gen_corpus(overrides: &Overrides, out: &Path) -> Result<()> {
    let cfg = layered(None, overrides)?;
    let synth = cfg.synthetic()?;
    let eval_bags = cfg.eval_bags()?;
    if eval_bags >= synth.n_bags {
        return Err(UsageError(format!(
            "eval_bags ({eval_bags}) must be below n_bags ({})",
            synth.n_bags
        ))
        .into());
    }
    let (corpus, store) = generate_synthetic(&synth)?;
    let (train, eval) = corpus.split(synth.n_bags - eval_bags);
    create_dir(out)?;
    train.write_json(out.join(TRAIN_CORPUS))?;
    eval.write_json(out.join(EVAL_CORPUS))?;
    store.write(out.join(EMBEDDINGS))?;
    cfg.write_resolved(out)?;
    log::info!(
        "wrote {} train and {} eval bags to {}",
        train.bags.len(),
        eval.bags.len(),
        out.display()
    );
    Ok(())
}

pub struct LoadedCorpus {
    pub train: Corpus,
    pub eval: Corpus,
    pub store: EmbeddingStore,
}

pub fn load_corpus(dir: &Path) -> Result<LoadedCorpus> {
    let read = |name: &str| -> Result<Corpus> {
        let path = dir.join(name);
        let corpus = Corpus::read_json(&path).with_context(|| format!("loading {}", path.display()))?;
        let violations = corpus.validate();
        if let Some((bag, v)) = violations.first() {
            bail!(
                "{}: bag {bag}: {v} ({} violations in total)",
                path.display(),
                violations.len()
            );
        }
        corpus.validate_sentences()?;
        Ok(corpus)
    };
    let store_path = dir.join(EMBEDDINGS);
    let store = EmbeddingStore::load(&store_path).with_context(|| format!("loading {}", store_path.display()))?;
    Ok(LoadedCorpus {
        train: read(TRAIN_CORPUS)?,
        eval: read(EVAL_CORPUS)?,
        store,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_history_csv(history: &TrainHistory, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(HISTORY_HEADER)?;
    for s in &history.steps {
        w.write_record([
            s.step.to_string(),
            s.reward.to_string(),
            s.reward_ema.to_string(),
            s.re_loss.to_string(),
            s.epoch.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn metric_values(m: &MetricSet) -> [f64; 7] {
    [
        m.auc,
        m.f1,
        m.p_at_50,
        m.p_at_100,
        m.evidence_recall,
        m.mean_bridge_mentions_pos,
        m.mean_bridge_mentions_na,
    ]
}

fn write_epochs_csv(history: &TrainHistory, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["epoch", "mean_reward", "mean_re_loss"];
    header.extend(METRICS_HEADER.iter().copied());
    w.write_record(&header)?;
    for e in &history.epochs {
        let mut row = vec![
            e.epoch.to_string(),
            e.mean_reward.to_string(),
            e.mean_re_loss.to_string(),
        ];
        match &e.dev {
            Some(m) => row.extend(metric_values(m).iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), METRICS_HEADER.len())),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn train_command(cfg: &RunConfig, corpus_dir: &Path, out: &Path) -> Result<()> {
    let train_cfg = cfg.train()?;
    let reward = cfg.reward()?;
    let data = load_corpus(corpus_dir)?;
    let prepared = PreparedCorpus::new(&data.train, &data.store)?;
    let dev = if cfg.dev_eval()? {
        Some(PreparedCorpus::new(&data.eval, &data.store)?)
    } else {
        None
    };
    let outcome = train_with_dev(&prepared, dev.as_ref(), train_cfg, reward)?;
    create_dir(out)?;
    let echo = cfg.to_text();
    Checkpoint::from_models(&outcome.policy, &outcome.head, &echo).write(out.join(CHECKPOINT))?;
    write_history_csv(&outcome.history, &out.join(HISTORY_CSV))?;
    write_epochs_csv(&outcome.history, &out.join(EPOCHS_CSV))?;
    cfg.write_resolved(out)?;
    Ok(())
}

pub fn write_metrics_csv(metrics: &MetricSet, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(METRICS_HEADER)?;
    w.write_record(metric_values(metrics).iter().map(f64::to_string))?;
    w.flush()?;
    Ok(())
}

pub fn write_selection_stats_csv(stats: &BridgeStats, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SELECTION_STATS_HEADER)?;
    let groups: [(&str, &BTreeMap<usize, usize>); 3] = [
        ("positive_path", &stats.positive_paths),
        ("na_path_in_positive_bag", &stats.na_paths_in_positive_bags),
        ("na_bag_path", &stats.na_bag_paths),
    ];
    for (name, hist) in groups {
        for (count, paths) in hist {
            w.write_record([name.to_string(), count.to_string(), paths.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn evaluate_model(cfg: &RunConfig, model_dir: &Path, data: &LoadedCorpus) -> Result<EvalReport> {
    let ckpt = Checkpoint::read(model_dir.join(CHECKPOINT))?;
    let train_cfg = cfg.train()?;
    let (policy, head) = ckpt.into_models(cfg.head_variant()?, train_cfg.train_theta)?;
    let prepared = PreparedCorpus::new(&data.eval, &data.store)?;
    Ok(evaluate(&policy, &head, &prepared, &train_cfg)?)
}

pub fn eval_command(cfg: &RunConfig, model_dir: &Path, corpus_dir: &Path, out: &Path) -> Result<()> {
    let data = load_corpus(corpus_dir)?;
    let report = evaluate_model(cfg, model_dir, &data)?;
    create_dir(out)?;
    write_metrics_csv(&report.metrics, &out.join(METRICS_CSV))?;
    write_selection_stats_csv(&report.bridge, &out.join(SELECTION_STATS_CSV))?;
    let extra = cfg.extra_k()?;
    if !extra.is_empty() {
        let mut w = csv_writer(&out.join(PRECISION_CSV))?;
        w.write_record(["k", "precision"])?;
        for k in extra {
            w.write_record([k.to_string(), precision_at_k(&report.predictions, k)?.to_string()])?;
        }
        w.flush()?;
    }
    if out != model_dir {
        cfg.write_resolved(out)?;
    }
    Ok(())
}

/// Parses `key=v1,v2` sweeps into their cartesian product, first
/// sweep varying slowest.
pub fn sweep_grid(sweeps: &[String]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut keys = Vec::new();
    let mut grid: Vec<Vec<String>> = vec![Vec::new()];
    for sweep in sweeps {
        let (key, values) = sweep
            .split_once('=')
            .ok_or_else(|| UsageError(format!("sweep must look like key=v1,v2; got `{sweep}`")))?;
        let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(UsageError(format!("sweep `{key}` lists no values")).into());
        }
        keys.push(key.trim().to_owned());
        grid = grid
            .into_iter()
            .flat_map(|row| {
                values.iter().map(move |v| {
                    let mut next = row.clone();
                    next.push((*v).to_owned());
                    next
                })
            })
            .collect();
    }
    Ok((keys, grid))
}

/// Resolved configuration of one grid cell. `lambda` also sets the N/A
/// scale to 1 so both sweep points differ only in the positive scale.
pub fn grid_config(base: &RunConfig, keys: &[String], values: &[String]) -> Result<RunConfig> {
    let mut cfg = base.clone();
    for (k, v) in keys.iter().zip(values) {
        cfg.set(k, v)?;
        if k == "lambda" {
            cfg.set("lambda_na", "1.0")?;
        }
    }
    Ok(cfg)
}

pub fn ablate_command(base: &RunConfig, corpus_dir: &Path, sweeps: &[String], out: &Path) -> Result<()> {
    let (keys, grid) = sweep_grid(sweeps)?;
    let configs = grid
        .iter()
        .map(|values| {
            let cfg = grid_config(base, &keys, values)?;
            cfg.train()?;
            cfg.reward()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let data = load_corpus(corpus_dir)?;
    create_dir(out)?;
    base.write_resolved(out)?;
    let mut w = csv_writer(&out.join(ABLATION_CSV))?;
    let mut header: Vec<String> = keys.clone();
    header.extend(METRICS_HEADER.iter().map(|h| h.to_string()));
    header.push("final_reward_ema".into());
    w.write_record(&header)?;
    let prepared = PreparedCorpus::new(&data.train, &data.store)?;
    let eval_set = PreparedCorpus::new(&data.eval, &data.store)?;
    for (i, (values, cfg)) in grid.iter().zip(&configs).enumerate() {
        log::info!(
            "ablation run {i}: {}",
            keys.iter()
                .zip(values)
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        let train_cfg = cfg.train()?;
        let outcome = train_with_dev(&prepared, None, train_cfg, cfg.reward()?)?;
        let report = evaluate(&outcome.policy, &outcome.head, &eval_set, &train_cfg)?;
        let run_dir = out.join(format!("run-{i}"));
        create_dir(&run_dir)?;
        write_history_csv(&outcome.history, &run_dir.join(HISTORY_CSV))?;
        cfg.write_resolved(&run_dir)?;
        let mut row = values.clone();
        row.extend(metric_values(&report.metrics).iter().map(f64::to_string));
        row.push(outcome.history.final_ema().unwrap_or(f64::NAN).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let header = r.headers()?.iter().map(str::to_owned).collect();
        let rows = r
            .records()
            .map(|rec| Ok(rec?.iter().map(str::to_owned).collect()))
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Table { header, rows })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn has(&self, names: &[&str]) -> bool {
        names.iter().all(|n| self.col(n).is_some())
    }

    fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.col(name).with_context(|| format!("missing column `{name}`"))?;
        self.rows
            .iter()
            .map(|r| {
                let cell = r.get(c).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    Ok(f64::NAN)
                } else {
                    cell.parse::<f64>()
                        .with_context(|| format!("column `{name}`: `{cell}` is not a number"))
                }
            })
            .collect()
    }
}

/// Writes one SVG per input and returns the paths written.
pub fn report_command(inputs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let mut written = Vec::new();
    for input in inputs {
        let table = Table::read(input)?;
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        let parent = input
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .map(|p| format!("{p}-"))
            .unwrap_or_default();
        let (name, svg) = render(&table, stem).with_context(|| format!("rendering {}", input.display()))?;
        let path = out.join(format!("{parent}{name}.svg"));
        fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

fn render(t: &Table, stem: &str) -> Result<(String, String)> {
    use svg::Series;
    if t.has(&HISTORY_HEADER) {
        let steps = t.floats("step")?;
        let series = ["reward", "reward_ema"]
            .iter()
            .map(|name| {
                Ok(Series {
                    name: name.to_string(),
                    points: steps.iter().copied().zip(t.floats(name)?).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok((
            format!("{stem}-reward-curve"),
            svg::line_chart("Reward per step", "step", "reward", &series),
        ));
    }
    if t.has(&SELECTION_STATS_HEADER) {
        let g = t.col("group").expect("checked");
        let counts = t.floats("bridge_mentions")?;
        let paths = t.floats("paths")?;
        let max = counts.iter().copied().fold(0.0f64, f64::max) as usize;
        let categories: Vec<String> = (0..=max).map(|c| c.to_string()).collect();
        let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
        for (i, row) in t.rows.iter().enumerate() {
            let name = &row[g];
            let pos = match groups.iter().position(|(n, _)| n == name) {
                Some(p) => p,
                None => {
                    groups.push((name.clone(), vec![0.0; max + 1]));
                    groups.len() - 1
                }
            };
            groups[pos].1[counts[i] as usize] += paths[i];
        }
        return Ok((
            format!("{stem}-bridge-histogram"),
            svg::bar_chart(
                "Bridge-entity mentions per path",
                "bridge mentions",
                "paths",
                &categories,
                &groups,
            ),
        ));
    }
    let t_col = ["T", "max_steps"].into_iter().find(|c| t.col(c).is_some());
    if let (Some(tc), true) = (t_col, t.has(&["f1"])) {
        let xs = t.floats(tc)?;
        let f1 = t.floats("f1")?;
        let others: Vec<usize> = (0..t.header.len())
            .take_while(|&i| t.header[i] != METRICS_HEADER[0])
            .filter(|&i| t.header[i] != tc)
            .collect();
        let mut series: Vec<Series> = Vec::new();
        for (i, row) in t.rows.iter().enumerate() {
            let label = if others.is_empty() {
                "f1".to_string()
            } else {
                others
                    .iter()
                    .map(|&c| format!("{}={}", t.header[c], row[c]))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            match series.iter_mut().find(|s| s.name == label) {
                Some(s) => s.points.push((xs[i], f1[i])),
                None => series.push(Series {
                    name: label,
                    points: vec![(xs[i], f1[i])],
                }),
            }
        }
        for s in &mut series {
            s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        return Ok((
            format!("{stem}-f1-vs-T"),
            svg::line_chart("F1 against T", "T", "best F1", &series),
        ));
    }
    if t.has(&METRICS_HEADER) {
        let first = t.header.iter().position(|h| h == METRICS_HEADER[0]).expect("checked");
        let categories: Vec<String> = t
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                if first == 0 {
                    format!("run {i}")
                } else {
                    row[..first].join(" ")
                }
            })
            .collect();
        let series = ["auc", "f1", "evidence_recall"]
            .iter()
            .map(|m| Ok((m.to_string(), t.floats(m)?)))
            .collect::<Result<Vec<_>>>()?;
        return Ok((
            format!("{stem}-metrics"),
            svg::bar_chart("Evaluation metrics", "run", "value", &categories, &series),
        ));
    }
    bail!("unrecognised CSV header {:?}", t.header)
}
