//! The pipeline stages. Each writes its outputs plus a resolved-config
//! snapshot into its output directory.
//!
//! Files:
//! - data dir: `redraw_NN.manifest`, `redraw_NN.train`, `redraw_NN.eval`
//! - checkpoint dir: `encoder_S.ckpt`, `loss_S.csv`
//! - report dir: `{task}_{table}.csv` / `.txt`, `freeform_examples.csv`,
//!   `report.txt` and SVG figures

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use funclearn::augment::augment;
use funclearn::curves::{make_redraws, CurveDataset, RedrawSampler, Split};
use funclearn::embed::{EncoderEmbedder, RawEmbedder};
use funclearn::eval::{Completion, Experiment, Model, ResultTable, Task};
use funclearn::gp::KernelFamily;
use funclearn::heads::freeform::FIT_LEN;
use funclearn::nn::checkpoint::{self, CheckpointInfo};
use funclearn::nn::{train_encoder, FreshCurves, TrainConfig};
use funclearn::rng::{derive_seed, stream};
use funclearn::{Grid, HyperparamRedraw};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::plot::{self, CompletionPanel, Series};

const GEN: u64 = 1;
const TRAIN: u64 = 2;
const EVAL: u64 = 3;
const PREVIEW: u64 = 4;

pub const CONTRASTIVE: &str = "contrastive";
pub const RAW: &str = "raw";
pub const EXAMPLES: &str = "freeform_examples.csv";
const EXAMPLE_COUNT: usize = 6;

pub fn manifest_path(cfg: &RunConfig, r: usize) -> PathBuf {
    cfg.data_dir.join(format!("redraw_{r:02}.manifest"))
}

pub fn dataset_path(cfg: &RunConfig, r: usize, split: Split) -> PathBuf {
    cfg.data_dir.join(format!("redraw_{r:02}.{}", split.tag()))
}

pub fn checkpoint_path(cfg: &RunConfig, s: usize) -> PathBuf {
    cfg.checkpoint_dir.join(format!("encoder_{s}.ckpt"))
}

pub fn loss_path(cfg: &RunConfig, s: usize) -> PathBuf {
    cfg.checkpoint_dir.join(format!("loss_{s}.csv"))
}

pub fn table_path(cfg: &RunConfig, task: Task, slug: &str, ext: &str) -> PathBuf {
    cfg.report_dir.join(format!("{}_{slug}.{ext}", task.name()))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Redraw manifests plus a train and an eval dataset per redraw.
pub fn gen(cfg: &RunConfig) -> CliResult<()> {
    create_dir(&cfg.data_dir)?;
    let grid = Grid::default();
    let redraws = make_redraws::<f64>(cfg.redraws, derive_seed(cfg.master_seed, &[GEN]))?;
    for (r, redraw) in redraws.into_iter().enumerate() {
        write(&manifest_path(cfg, r), &redraw.to_string())?;
        let sampler = RedrawSampler::new(redraw, grid.clone())?;
        for (k, split) in [Split::Train, Split::Eval].into_iter().enumerate() {
            let seed = derive_seed(cfg.master_seed, &[GEN, r as u64, k as u64]);
            let data = CurveDataset::new(sampler.balanced(cfg.per_class, seed)?, grid.clone(), r, split)?;
            let path = dataset_path(cfg, r, split);
            let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
            data.write_to(BufWriter::new(file)).map_err(|source| CliError::Artifact { path: path.clone(), source })?;
        }
        eprintln!("redraw {r}: {} curves per split", cfg.per_class * KernelFamily::COUNT);
    }
    cfg.write_snapshot(&cfg.data_dir)
}

/// One encoder per seed and its per-step loss.
pub fn train(cfg: &RunConfig) -> CliResult<()> {
    create_dir(&cfg.checkpoint_dir)?;
    let source = FreshCurves::default();
    for s in 0..cfg.seeds {
        let train = TrainConfig { seed: derive_seed(cfg.master_seed, &[TRAIN, s as u64]), ..cfg.train.clone() };
        let total = train.total_steps();
        let outcome = train_encoder(&train, &cfg.encoder, &cfg.augment, &source, |step, loss| {
            if step % 100 == 0 || step + 1 == total {
                eprintln!("seed {s}: step {step}/{total} loss {loss:.4}");
            }
        })?;
        let mut csv = String::from("step,loss\n");
        for (i, l) in outcome.losses.iter().enumerate() {
            let _ = writeln!(csv, "{i},{l}");
        }
        write(&loss_path(cfg, s), &csv)?;
        let path = checkpoint_path(cfg, s);
        checkpoint::save(&outcome.params, &CheckpointInfo { seed: train.seed, steps: total }, &path)
            .map_err(|source| CliError::Artifact { path: path.clone(), source })?;
    }
    cfg.write_snapshot(&cfg.checkpoint_dir)
}

fn load_redraws(cfg: &RunConfig) -> CliResult<Vec<HyperparamRedraw>> {
    (0..cfg.redraws)
        .map(|r| {
            let path = manifest_path(cfg, r);
            let redraw: HyperparamRedraw =
                read(&path)?.parse().map_err(|source| CliError::Artifact { path: path.clone(), source })?;
            if redraw.redraw_id != r {
                return Err(CliError::Config(format!("{} holds redraw {}", path.display(), redraw.redraw_id)));
            }
            Ok(redraw)
        })
        .collect()
}

fn load_models(cfg: &RunConfig) -> CliResult<Vec<Model>> {
    let mut encoders: Vec<Box<dyn funclearn::embed::Embedder>> = Vec::new();
    for s in 0..cfg.seeds {
        let path = checkpoint_path(cfg, s);
        if !path.exists() {
            return Err(CliError::MissingArtifact(path));
        }
        let (params, _) = checkpoint::load::<f32>(&path).map_err(|source| CliError::Artifact { path: path.clone(), source })?;
        encoders.push(Box::new(EncoderEmbedder { name: format!("{CONTRASTIVE}_{s}"), params }));
    }
    let len = Grid::default().len();
    Ok(vec![Model::new(CONTRASTIVE, encoders), Model::new(RAW, vec![Box::new(RawEmbedder { len })])])
}

/// Runs one task over the seeds × redraws grid and writes its tables.
pub fn eval(cfg: &RunConfig, task: Task) -> CliResult<()> {
    let redraws = load_redraws(cfg)?;
    let models = load_models(cfg)?;
    let protocol = cfg.protocol();
    let grid = Grid::default();
    let experiment =
        Experiment { protocol: &protocol, redraws: &redraws, grid: &grid, master_seed: derive_seed(cfg.master_seed, &[EVAL]) };
    create_dir(&cfg.report_dir)?;
    let tables = experiment.run(task, &models)?;
    for (table, (slug, _)) in tables.iter().zip(task.tables()) {
        write(&table_path(cfg, task, slug, "csv"), &table.to_csv())?;
        write(&table_path(cfg, task, slug, "txt"), &table.to_text(decimals(slug)))?;
        eprintln!("{}", table.to_text(decimals(slug)));
    }
    if task == Task::Freeform {
        let examples = experiment.freeform_examples(&models[0], 0, 0, 0, EXAMPLE_COUNT)?;
        write(&cfg.report_dir.join(EXAMPLES), &examples_csv(&examples))?;
    }
    cfg.write_snapshot(&cfg.report_dir)
}

fn decimals(slug: &str) -> usize {
    if slug == "rmse" {
        4
    } else {
        2
    }
}

fn examples_csv(examples: &[Completion]) -> String {
    let mut out = String::from("curve,family,series,values\n");
    for (i, c) in examples.iter().enumerate() {
        for (series, values) in [("truth", &c.values), ("model", &c.model), ("gpio", &c.gpio)] {
            let joined: Vec<String> = values.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{i},{},{series},{}", c.family.tag(), joined.join(","));
        }
    }
    out
}

fn parse_examples(path: &Path, text: &str) -> CliResult<Vec<CompletionPanel>> {
    let bad = |line: &str| CliError::Config(format!("{}: malformed line `{line}`", path.display()));
    let x = Grid::default().points().to_vec();
    let mut panels: Vec<CompletionPanel> = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let mut fields = line.split(',');
        let (Some(curve), Some(family), Some(series)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(bad(line));
        };
        let curve: usize = curve.parse().map_err(|_| bad(line))?;
        let values = fields.map(|v| v.parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad(line))?;
        if curve == panels.len() {
            panels.push(CompletionPanel {
                title: format!("{family} prompt"),
                x: x.clone(),
                truth: Vec::new(),
                prompt_len: FIT_LEN,
                model: Vec::new(),
                gpio: Vec::new(),
            });
        }
        let panel = panels.get_mut(curve).ok_or_else(|| bad(line))?;
        match series {
            "truth" if values.len() == x.len() => panel.truth = values,
            "model" if values.len() == x.len() - FIT_LEN => panel.model = values,
            "gpio" if values.len() == x.len() - FIT_LEN => panel.gpio = values,
            _ => return Err(bad(line)),
        }
    }
    if panels.iter().any(|p| p.truth.is_empty() || p.model.is_empty() || p.gpio.is_empty()) {
        return Err(CliError::Config(format!("{}: incomplete completion records", path.display())));
    }
    Ok(panels)
}

/// Figures and text for every table `eval` has written, the freeform
/// completion overlays and an augmentation preview.
pub fn report(cfg: &RunConfig) -> CliResult<()> {
    let mut found = Vec::new();
    for task in Task::ALL {
        for &(slug, title) in task.tables() {
            let path = table_path(cfg, task, slug, "csv");
            if path.exists() {
                found.push((task, slug, ResultTable::from_csv(title, &read(&path)?)?));
            }
        }
    }
    if found.is_empty() {
        return Err(CliError::MissingArtifact(table_path(cfg, Task::Classify, Task::Classify.tables()[0].0, "csv")));
    }
    let mut text = String::new();
    for (task, slug, table) in &found {
        plot::table_chart(table, &table_path(cfg, *task, slug, "svg"))?;
        text.push_str(&table.to_text(decimals(slug)));
        text.push('\n');
    }
    write(&cfg.report_dir.join("report.txt"), &text)?;
    let examples = cfg.report_dir.join(EXAMPLES);
    if examples.exists() {
        let panels = parse_examples(&examples, &read(&examples)?)?;
        plot::completion_chart(&panels, &cfg.report_dir.join("freeform_examples.svg"))?;
    }
    augment_preview(cfg)
}

/// One fresh curve and two independent augmentations of it, as CSV and SVG.
pub fn augment_preview(cfg: &RunConfig) -> CliResult<()> {
    create_dir(&cfg.report_dir)?;
    let grid = Grid::default();
    let mut rng = stream(cfg.master_seed, &[PREVIEW]);
    let curve = funclearn::curves::generate_fresh_curve(&grid, &mut rng)?;
    let first = augment(&curve.values, &grid, &cfg.augment, &mut rng)?;
    let second = augment(&curve.values, &grid, &cfg.augment, &mut rng)?;
    let mut csv = String::from("x,source,first,second\n");
    for (i, x) in grid.points().iter().enumerate() {
        let _ = writeln!(csv, "{x},{},{},{}", curve.values[i], first[i], second[i]);
    }
    write(&cfg.report_dir.join("augment_preview.csv"), &csv)?;
    let pts = |v: &[f64]| grid.points().iter().copied().zip(v.iter().copied()).collect();
    let family = curve.origin.map_or("fresh", KernelFamily::tag);
    plot::line_chart(
        &format!("Positive pair from a {family} curve"),
        &[
            Series { name: "source", points: pts(&curve.values), dashed: true },
            Series { name: "view 1", points: pts(&first), dashed: false },
            Series { name: "view 2", points: pts(&second), dashed: false },
        ],
        &cfg.report_dir.join("augment_preview.svg"),
    )?;
    cfg.write_snapshot(&cfg.report_dir)
}
