//! The seeds × redraws experiment grid for the three tasks.
//!
//! Every `(seed, redraw)` cell draws its own training and evaluation data
//! from disjoint streams of the master seed, shares that data across models,
//! fits one head per model and budget, and reports one measurement per
//! budget. Cells are aggregated into [`ResultTable`]s.

use rayon::prelude::*;

use super::metrics::{choice_accuracy, delta_acc, l2_metric, pearson_or_zero, Summary};
use super::table::ResultTable;
use crate::curves::{Curve, HyperparamRedraw, RedrawSampler};
use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::gp::{Conditioner, Grid, KernelFamily};
use crate::heads::freeform::{FIT_LEN, HORIZON, LAG, RIDGE};
use crate::heads::{encoder_input, fit_classifier, fit_mc_head, ArModel, McBuilder, McConfig, McProblem, SgdConfig, PROMPT_LEN};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, stream};

const CLASSIFY: u64 = 1;
const MC: u64 = 2;
const FREEFORM: u64 = 3;

const TRAIN: u64 = 10;
const EVAL: u64 = 11;
const CURRICULUM: u64 = 12;
const HEAD: u64 = 13;

const CLASSES: usize = KernelFamily::COUNT;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Classify,
    Mc,
    Freeform,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Classify, Task::Mc, Task::Freeform];

    pub fn name(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Mc => "mc",
            Task::Freeform => "freeform",
        }
    }

    /// `(slug, title)` of each table [`Experiment::run`] returns, in order.
    pub fn tables(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Task::Classify => &[("accuracy", "Kernel classification accuracy (%)")],
            Task::Mc => &[("accuracy", "Multiple-choice accuracy (%)"), ("delta", "Compositional bias Δ_acc (points)")],
            Task::Freeform => &[("pearson", "Freeform extrapolation, Pearson ×100"), ("rmse", "Freeform extrapolation, RMSE")],
        }
    }

    fn titles(self) -> Vec<&'static str> {
        self.tables().iter().map(|t| t.1).collect()
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| Error::Parse(format!("unknown task `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Protocol {
    pub n_seeds: usize,
    pub n_redraws: usize,
    /// Training examples per category.
    pub classify_budgets: Vec<usize>,
    pub mc_budgets: Vec<usize>,
    /// Regression-phase curves per category.
    pub freeform_budgets: Vec<usize>,
    pub classify_eval_per_class: usize,
    pub mc_eval_problems: usize,
    /// Drawn from the generative mixture, not per category.
    pub freeform_eval_curves: usize,
    /// Labeled curves per category for the curriculum's classifier phase.
    pub curriculum_per_class: usize,
    pub sgd: SgdConfig,
    pub mc: McConfig,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            n_seeds: 3,
            n_redraws: 10,
            classify_budgets: vec![3, 10, 30, 100, 300],
            mc_budgets: vec![3, 10, 30, 100, 300],
            freeform_budgets: vec![1, 3, 10, 30, 100],
            classify_eval_per_class: 100,
            mc_eval_problems: 500,
            freeform_eval_curves: 700,
            curriculum_per_class: 300,
            sgd: SgdConfig::default(),
            mc: McConfig::default(),
        }
    }
}

impl Protocol {
    pub fn budgets(&self, task: Task) -> &[usize] {
        match task {
            Task::Classify => &self.classify_budgets,
            Task::Mc => &self.mc_budgets,
            Task::Freeform => &self.freeform_budgets,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 || self.n_redraws == 0 {
            return Err(Error::Invalid("protocol needs at least one seed and one redraw".into()));
        }
        for task in Task::ALL {
            let b = self.budgets(task);
            if b.is_empty() || b.contains(&0) {
                return Err(Error::Invalid(format!("{} budgets must be non-empty and positive", task.name())));
            }
        }
        if self.classify_eval_per_class == 0 || self.mc_eval_problems == 0 || self.freeform_eval_curves == 0 {
            return Err(Error::Invalid("evaluation sets must be non-empty".into()));
        }
        if self.curriculum_per_class == 0 {
            return Err(Error::Invalid("curriculum_per_class must be positive".into()));
        }
        Ok(())
    }

    /// `(seed, redraw)` pairs, seed-major.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        (0..self.n_seeds).flat_map(|s| (0..self.n_redraws).map(move |r| (s, r))).collect()
    }
}

/// A named representation with one embedder per training seed (reused
/// cyclically when there are fewer embedders than seeds).
pub struct Model {
    pub name: String,
    pub embedders: Vec<Box<dyn Embedder>>,
}

impl Model {
    pub fn new(name: &str, embedders: Vec<Box<dyn Embedder>>) -> Self {
        Self { name: name.to_string(), embedders }
    }

    pub fn for_seed(&self, seed: usize) -> &dyn Embedder {
        self.embedders[seed % self.embedders.len()].as_ref()
    }
}

/// Everything a task run needs besides the models.
pub struct Experiment<'a> {
    pub protocol: &'a Protocol,
    pub redraws: &'a [HyperparamRedraw<f64>],
    pub grid: &'a Grid<f64>,
    pub master_seed: u64,
}

fn embed_inputs(e: &dyn Embedder, curves: &[&[f64]]) -> Result<Matrix<f64>> {
    let inputs: Vec<Vec<f64>> = curves.iter().map(|c| encoder_input(c, e.input_len())).collect();
    let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    e.embed(&refs)
}

fn embed_curves(e: &dyn Embedder, curves: &[Curve<f64>]) -> Result<Matrix<f64>> {
    let refs: Vec<&[f64]> = curves.iter().map(|c| c.values.as_slice()).collect();
    embed_inputs(e, &refs)
}

/// Row indices of the first `b` curves per family in a family-major
/// balanced set with `per_class` curves per family.
fn prefix_rows(per_class: usize, b: usize) -> Vec<usize> {
    (0..CLASSES).flat_map(|f| (0..b).map(move |i| f * per_class + i)).collect()
}

fn labels_of(curves: &[Curve<f64>]) -> Vec<usize> {
    curves.iter().map(|c| c.origin.expect("generated curves carry their family").index()).collect()
}

impl Experiment<'_> {
    fn validate(&self, models: &[Model]) -> Result<()> {
        self.protocol.validate()?;
        if self.redraws.len() < self.protocol.n_redraws {
            return Err(Error::Invalid(format!(
                "protocol uses {} redraws, {} supplied",
                self.protocol.n_redraws,
                self.redraws.len()
            )));
        }
        if models.is_empty() {
            return Err(Error::Invalid("no models to evaluate".into()));
        }
        if let Some(m) = models.iter().find(|m| m.embedders.is_empty()) {
            return Err(Error::Invalid(format!("model {} has no embedders", m.name)));
        }
        Ok(())
    }

    fn seed(&self, path: &[u64]) -> u64 {
        derive_seed(self.master_seed, path)
    }

    /// Runs `cell` on every `(seed, redraw)` and aggregates its
    /// `[table][row][budget]` measurements.
    fn run_cells<F>(&self, titles: &[&str], rows: &[Vec<String>], budgets: &[usize], cell: F) -> Result<Vec<ResultTable>>
    where
        F: Fn(usize, usize, &RedrawSampler<f64>) -> Result<Vec<Vec<Vec<f64>>>> + Sync,
    {
        let measured: Vec<Vec<Vec<Vec<f64>>>> = self
            .protocol
            .cells()
            .into_par_iter()
            .map(|(s, r)| {
                let sampler = RedrawSampler::new(self.redraws[r].clone(), self.grid.clone())?;
                cell(s, r, &sampler)
            })
            .collect::<Result<_>>()?;
        titles
            .iter()
            .zip(rows)
            .enumerate()
            .map(|(t, (title, names))| {
                let mut table = ResultTable::new(title, budgets.to_vec());
                for (i, name) in names.iter().enumerate() {
                    let cells = (0..budgets.len())
                        .map(|b| Summary::of(&measured.iter().map(|m| m[t][i][b]).collect::<Vec<_>>()))
                        .collect();
                    table.push_row(name, cells)?;
                }
                Ok(table)
            })
            .collect()
    }

    /// 14-way accuracy (percent) of a cross-validated linear probe.
    pub fn classify(&self, models: &[Model]) -> Result<ResultTable> {
        self.validate(models)?;
        let p = self.protocol;
        let budgets = &p.classify_budgets;
        let max_b = *budgets.iter().max().expect("validated");
        let names = vec![models.iter().map(|m| m.name.clone()).collect::<Vec<_>>()];
        let mut tables = self.run_cells(&Task::Classify.titles(), &names, budgets, |s, r, sampler| {
            let (su, ru) = (s as u64, r as u64);
            let train = sampler.balanced(max_b, self.seed(&[CLASSIFY, su, ru, TRAIN]))?;
            let eval = sampler.balanced(p.classify_eval_per_class, self.seed(&[CLASSIFY, su, ru, EVAL]))?;
            let (train_labels, eval_labels) = (labels_of(&train), labels_of(&eval));
            let rows = models
                .iter()
                .enumerate()
                .map(|(mi, m)| {
                    let e = m.for_seed(s);
                    let (ht, he) = (embed_curves(e, &train)?, embed_curves(e, &eval)?);
                    budgets
                        .iter()
                        .map(|&b| {
                            let idx = prefix_rows(max_b, b);
                            let labels: Vec<usize> = idx.iter().map(|&i| train_labels[i]).collect();
                            let mut rng = stream(self.master_seed, &[CLASSIFY, su, ru, HEAD, b as u64, mi as u64]);
                            let clf = fit_classifier(&ht.select_rows(&idx), &labels, CLASSES, &p.sgd, &mut rng)?;
                            Ok(100.0 * clf.accuracy(&he, &eval_labels)?)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(vec![rows])
        })?;
        Ok(tables.remove(0))
    }

    fn mc_problems(&self, builder: &McBuilder, path: [u64; 4], n: usize) -> Result<Vec<McProblem>> {
        (0..n).map(|i| builder.build(&mut stream(self.master_seed, &[path[0], path[1], path[2], path[3], i as u64]))).collect()
    }

    /// Multiple-choice accuracy (percent) and Δ_acc (points). `budget`
    /// examples per category means `14 · budget` training problems. The
    /// accuracy table has an extra `untrained` row: an uninformative head
    /// (`W = 0`) on the first model. A randomly initialized `W` is not
    /// uninformative: `W^T W` is positive semi-definite, so it already favors
    /// the candidate closer to the prompt.
    pub fn mc(&self, models: &[Model]) -> Result<McTables> {
        self.validate(models)?;
        let p = self.protocol;
        let budgets = &p.mc_budgets;
        let max_n = CLASSES * budgets.iter().max().expect("validated");
        let mut acc_rows: Vec<String> = models.iter().map(|m| m.name.clone()).collect();
        acc_rows.push(UNTRAINED.to_string());
        let delta_rows: Vec<String> = models.iter().map(|m| m.name.clone()).collect();
        let titles = Task::Mc.titles();
        let mut tables = self.run_cells(&titles, &[acc_rows, delta_rows], budgets, |s, r, sampler| {
            let (su, ru) = (s as u64, r as u64);
            let builder = McBuilder::new(sampler, PROMPT_LEN)?;
            let train = self.mc_problems(&builder, [MC, su, ru, TRAIN], max_n)?;
            let eval = self.mc_problems(&builder, [MC, su, ru, EVAL], p.mc_eval_problems)?;
            let correct: Vec<usize> = train.iter().map(|q| q.correct).collect();
            let eval_correct: Vec<usize> = eval.iter().map(|q| q.correct).collect();
            let sources: Vec<_> = eval.iter().map(|q| q.source).collect();
            let (mut acc, mut delta, mut untrained) = (Vec::new(), Vec::new(), Vec::new());
            for (mi, m) in models.iter().enumerate() {
                let e = m.for_seed(s);
                let [t0, t1, t2] = embed_problems(e, &train)?;
                let [e0, e1, e2] = embed_problems(e, &eval)?;
                let (mut a_row, mut d_row) = (Vec::new(), Vec::new());
                for &b in budgets {
                    let idx: Vec<usize> = (0..CLASSES * b).collect();
                    let head_seed = [MC, su, ru, HEAD, b as u64, mi as u64];
                    let head = fit_mc_head(
                        &t0.select_rows(&idx),
                        &t1.select_rows(&idx),
                        &t2.select_rows(&idx),
                        &correct[..idx.len()],
                        &p.mc,
                        &mut stream(self.master_seed, &head_seed),
                    )?;
                    let probs = head.probabilities(&e0, &e1, &e2)?;
                    a_row.push(100.0 * choice_accuracy(&probs, &eval_correct)?);
                    d_row.push(100.0 * delta_acc(&probs, &sources)?);
                    if mi == 0 {
                        // W = 0: every problem is a coin flip, resolved toward
                        // the first candidate.
                        let mut idle = head.clone();
                        idle.w = Matrix::zeros(idle.w.rows(), idle.w.cols());
                        untrained.push(100.0 * choice_accuracy(&idle.probabilities(&e0, &e1, &e2)?, &eval_correct)?);
                    }
                }
                acc.push(a_row);
                delta.push(d_row);
            }
            acc.push(untrained);
            Ok(vec![acc, delta])
        })?;
        let delta = tables.pop().expect("two tables");
        let accuracy = tables.pop().expect("two tables");
        Ok(McTables { accuracy, delta })
    }

    fn freeform_data(&self, s: usize, r: usize, sampler: &RedrawSampler<f64>) -> Result<FreeformData> {
        let p = self.protocol;
        let (su, ru) = (s as u64, r as u64);
        let max_b = *p.freeform_budgets.iter().max().expect("validated");
        Ok(FreeformData {
            curriculum: sampler.balanced(p.curriculum_per_class, self.seed(&[FREEFORM, su, ru, CURRICULUM]))?,
            regression: sampler.balanced(max_b, self.seed(&[FREEFORM, su, ru, TRAIN]))?,
            max_budget: max_b,
            eval: (0..p.freeform_eval_curves)
                .map(|i| sampler.generate(&mut stream(self.master_seed, &[FREEFORM, su, ru, EVAL, i as u64])))
                .collect::<Result<_>>()?,
        })
    }

    /// Curriculum forecasts of every eval prompt, one set per budget: a
    /// classifier fit on the labeled curriculum curves assigns classes to
    /// the unlabeled regression curves and to the prompts, then the
    /// class-conditional autoregression extrapolates.
    fn curriculum_forecasts(&self, e: &dyn Embedder, head_seed: u64, data: &FreeformData) -> Result<Vec<Vec<Vec<f64>>>> {
        let p = self.protocol;
        let mut rng = stream(head_seed, &[]);
        let clf = fit_classifier(&embed_curves(e, &data.curriculum)?, &labels_of(&data.curriculum), CLASSES, &p.sgd, &mut rng)?;
        let reg_classes = clf.predict(&embed_curves(e, &data.regression)?)?;
        let prompts = data.prompts();
        let prompt_classes = clf.predict(&embed_inputs(e, &prompts)?)?;
        p.freeform_budgets
            .iter()
            .map(|&b| {
                let idx = prefix_rows(data.max_budget, b);
                let curves: Vec<&[f64]> = idx.iter().map(|&i| data.regression[i].values.as_slice()).collect();
                let classes: Vec<usize> = idx.iter().map(|&i| reg_classes[i]).collect();
                let ar = ArModel::fit(&curves, &classes, CLASSES, LAG, RIDGE, FIT_LEN)?;
                prompts.iter().zip(&prompt_classes).map(|(q, &c)| ar.forecast(c, q, HORIZON)).collect()
            })
            .collect()
    }

    /// Unconditional autoregression on as many curves as the curriculum
    /// sees (both phases), labels ignored.
    fn autoregression_forecasts(&self, data: &FreeformData) -> Result<Vec<Vec<Vec<f64>>>> {
        let prompts = data.prompts();
        self.protocol
            .freeform_budgets
            .iter()
            .map(|&b| {
                let curves: Vec<&[f64]> = data
                    .curriculum
                    .iter()
                    .map(|c| c.values.as_slice())
                    .chain(prefix_rows(data.max_budget, b).into_iter().map(|i| data.regression[i].values.as_slice()))
                    .collect();
                let ar = ArModel::fit_unconditional(&curves, LAG, RIDGE, FIT_LEN)?;
                prompts.iter().map(|q| ar.forecast(0, q, HORIZON)).collect()
            })
            .collect()
    }

    /// Ideal-observer forecasts under each curve's generating spec.
    fn gpio_forecasts(&self, sampler: &RedrawSampler<f64>, data: &FreeformData) -> Result<Vec<Vec<f64>>> {
        let conditioners: Vec<Conditioner<f64>> = sampler
            .redraw()
            .specs()
            .iter()
            .map(|spec| Conditioner::new(spec, self.grid, FIT_LEN))
            .collect::<Result<_>>()?;
        let query = &self.grid.points()[FIT_LEN..];
        data.eval
            .iter()
            .map(|c| conditioners[c.origin.expect("generated").index()].posterior_mean_offset(&c.values[..FIT_LEN], query))
            .collect()
    }

    /// Freeform extrapolation: Pearson (×100) and RMSE of 20-step forecasts
    /// for every model's curriculum forecaster, the unconditional
    /// autoregression and the GP ideal observer.
    pub fn freeform(&self, models: &[Model]) -> Result<FreeformTables> {
        self.validate(models)?;
        let budgets = &self.protocol.freeform_budgets;
        let mut rows: Vec<String> = models.iter().map(|m| m.name.clone()).collect();
        rows.push(AUTOREGRESSION.to_string());
        rows.push(GPIO.to_string());
        let titles = Task::Freeform.titles();
        let mut tables = self.run_cells(&titles, &[rows.clone(), rows], budgets, |s, r, sampler| {
            let data = self.freeform_data(s, r, sampler)?;
            let truths: Vec<&[f64]> = data.eval.iter().map(|c| &c.values[FIT_LEN..]).collect();
            let score = |forecasts: &[Vec<f64>]| -> Result<(f64, f64)> {
                let (mut r, mut l) = (0.0, 0.0);
                for (f, t) in forecasts.iter().zip(&truths) {
                    r += pearson_or_zero(f, t)?;
                    l += l2_metric(f, t)?;
                }
                let n = forecasts.len() as f64;
                Ok((100.0 * r / n, l / n))
            };
            let mut per_budget = Vec::new();
            for (mi, m) in models.iter().enumerate() {
                per_budget.push(self.curriculum_forecasts(m.for_seed(s), self.head_seed(s, r, mi), &data)?);
            }
            per_budget.push(self.autoregression_forecasts(&data)?);
            per_budget.push(vec![self.gpio_forecasts(sampler, &data)?; budgets.len()]);
            let (mut pearson_rows, mut l2_rows) = (Vec::new(), Vec::new());
            for row in &per_budget {
                let scores = row.iter().map(|f| score(f)).collect::<Result<Vec<_>>>()?;
                pearson_rows.push(scores.iter().map(|s| s.0).collect());
                l2_rows.push(scores.iter().map(|s| s.1).collect());
            }
            Ok(vec![pearson_rows, l2_rows])
        })?;
        let l2 = tables.pop().expect("two tables");
        let pearson = tables.pop().expect("two tables");
        Ok(FreeformTables { pearson, l2 })
    }

    fn head_seed(&self, s: usize, r: usize, model_index: usize) -> u64 {
        self.seed(&[FREEFORM, s as u64, r as u64, HEAD, model_index as u64])
    }

    /// The first `count` eval curves of cell `(seed, redraw)` with the
    /// forecasts the freeform table scored at the largest budget, for the
    /// model at `model_index` of the evaluated list.
    pub fn freeform_examples(&self, model: &Model, model_index: usize, seed: usize, redraw: usize, count: usize) -> Result<Vec<Completion>> {
        self.validate(std::slice::from_ref(model))?;
        if seed >= self.protocol.n_seeds || redraw >= self.protocol.n_redraws {
            return Err(Error::Invalid(format!("cell ({seed}, {redraw}) is outside the protocol")));
        }
        let sampler = RedrawSampler::new(self.redraws[redraw].clone(), self.grid.clone())?;
        let data = self.freeform_data(seed, redraw, &sampler)?;
        let mut model_f = self.curriculum_forecasts(model.for_seed(seed), self.head_seed(seed, redraw, model_index), &data)?;
        let model_f = model_f.pop().expect("non-empty budgets");
        let gpio = self.gpio_forecasts(&sampler, &data)?;
        Ok(data
            .eval
            .iter()
            .zip(model_f)
            .zip(gpio)
            .take(count)
            .map(|((c, m), g)| Completion {
                family: c.origin.expect("generated"),
                values: c.values.clone(),
                model: m,
                gpio: g,
            })
            .collect())
    }

    /// All tables of one task.
    pub fn run(&self, task: Task, models: &[Model]) -> Result<Vec<ResultTable>> {
        Ok(match task {
            Task::Classify => vec![self.classify(models)?],
            Task::Mc => {
                let t = self.mc(models)?;
                vec![t.accuracy, t.delta]
            }
            Task::Freeform => {
                let t = self.freeform(models)?;
                vec![t.pearson, t.l2]
            }
        })
    }
}

pub const UNTRAINED: &str = "untrained";
pub const AUTOREGRESSION: &str = "autoregression";
pub const GPIO: &str = "GPIO";

#[derive(Clone, Debug, PartialEq)]
pub struct McTables {
    pub accuracy: ResultTable,
    pub delta: ResultTable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreeformTables {
    pub pearson: ResultTable,
    pub l2: ResultTable,
}

struct FreeformData {
    curriculum: Vec<Curve<f64>>,
    regression: Vec<Curve<f64>>,
    max_budget: usize,
    eval: Vec<Curve<f64>>,
}

impl FreeformData {
    fn prompts(&self) -> Vec<&[f64]> {
        self.eval.iter().map(|c| &c.values[..FIT_LEN]).collect()
    }
}

/// A freeform eval curve with two forecasts of its last 20 values.
#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub family: KernelFamily,
    /// The whole curve; the first 80 values are the prompt.
    pub values: Vec<f64>,
    pub model: Vec<f64>,
    pub gpio: Vec<f64>,
}

/// Prompt (upsampled) and both candidates of every problem.
fn embed_problems(e: &dyn Embedder, problems: &[McProblem]) -> Result<[Matrix<f64>; 3]> {
    let prompts: Vec<&[f64]> = problems.iter().map(|q| q.prompt.as_slice()).collect();
    let first: Vec<&[f64]> = problems.iter().map(|q| q.candidates[0].as_slice()).collect();
    let second: Vec<&[f64]> = problems.iter().map(|q| q.candidates[1].as_slice()).collect();
    Ok([embed_inputs(e, &prompts)?, embed_inputs(e, &first)?, embed_inputs(e, &second)?])
}
