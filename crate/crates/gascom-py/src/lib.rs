//! Python bindings: corpus loading, walks, training, evaluation and
//! checkpoint round-trips, mirroring the CLI surface at library level.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use gascom::embed::{tokenize, Encoder, ToyProvider};
use gascom::graph::NodeId;
use gascom::metrics::MetricsReport;
use gascom::model::{Checkpoint, TaskMode};
use gascom::synth::{generate_synthetic_corpus, SynthSpec};
use gascom::train::{
    evaluate, split_instances, train, train_self_distilled, SplitSpec, TrainConfig,
};
use gascom::walks::{select_context, WalkConfig, WalkStrategy};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_strategy(name: &str) -> PyResult<WalkStrategy> {
    name.parse().map_err(err)
}

fn metrics_dict(py: Python<'_>, report: &MetricsReport) -> PyResult<Py<PyAny>> {
    let mut map = HashMap::new();
    map.insert("accuracy", report.accuracy);
    map.insert("macro_f1", report.macro_f1);
    map.insert("precision", report.precision);
    map.insert("recall", report.recall);
    map.insert("pr_auc", report.pr_auc);
    let obj = map.into_pyobject(py)?;
    obj.set_item("degenerate", report.degenerate)?;
    Ok(obj.into_any().unbind())
}

/// A parsed corpus of discussion trees.
#[pyclass(name = "Corpus")]
struct PyCorpus {
    inner: gascom::train::Corpus,
}

#[pymethods]
impl PyCorpus {
    /// Load a JSONL corpus file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyCorpus {
            inner: gascom::train::Corpus::from_path(&path).map_err(err)?,
        })
    }

    /// Parse a corpus from an in-memory JSONL string.
    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        let discussions = gascom::graph::parse_discussions(text.as_bytes()).map_err(err)?;
        Ok(PyCorpus {
            inner: gascom::train::Corpus::new(discussions),
        })
    }

    /// Seeded synthetic corpus whose labels depend on a marker two hops
    /// from the target.
    #[staticmethod]
    fn synthetic(discussions: usize, seed: u64) -> Self {
        PyCorpus {
            inner: generate_synthetic_corpus(&SynthSpec { discussions, seed }),
        }
    }

    fn to_jsonl(&self) -> String {
        gascom::synth::corpus_to_jsonl(&self.inner)
    }

    #[getter]
    fn num_discussions(&self) -> usize {
        self.inner.discussions.len()
    }

    #[getter]
    fn num_labeled(&self) -> usize {
        self.inner.labeled_instances().len()
    }

    /// Context selections for every labeled node:
    /// [(target, strategy, [(node, score), ...]), ...]
    #[pyo3(signature = (strategy="sim-rw", l=6, seed=0))]
    fn walk(
        &self,
        strategy: &str,
        l: usize,
        seed: u64,
    ) -> PyResult<Vec<(String, String, Vec<(String, f64)>)>> {
        let strategy = parse_strategy(strategy)?;
        if strategy.needs_model() {
            return Err(err("attention walks need a trained Model; use Model.walk"));
        }
        let sim = Encoder::Toy(ToyProvider::new(seed, 64));
        let cfg = WalkConfig::new(l, seed);
        let mut out = Vec::new();
        for d in &self.inner.discussions {
            for node in d.labeled_nodes() {
                let sel = select_context(d, &node.id, &cfg, strategy, &sim, None, 128)
                    .map_err(err)?;
                out.push((
                    node.id.as_str().to_string(),
                    sel.strategy.clone(),
                    sel.ordered_nodes
                        .iter()
                        .map(|(n, s)| (n.as_str().to_string(), *s))
                        .collect(),
                ));
            }
        }
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(discussions={}, labeled={})",
            self.inner.discussions.len(),
            self.inner.labeled_instances().len()
        )
    }
}

/// A trained model checkpoint.
#[pyclass(name = "Model")]
struct PyModel {
    checkpoint: Checkpoint,
    strategy: WalkStrategy,
    l: usize,
    seed: u64,
}

impl PyModel {
    fn train_config(&self, task: TaskMode) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            task,
            walk: WalkConfig::new(self.l, self.seed),
            strategy: self.strategy,
            d_model: self.checkpoint.params.dims.d_model,
            heads: self.checkpoint.params.dims.heads,
            t_max: self.checkpoint.t_max,
            ..TrainConfig::default()
        }
    }
}

#[pymethods]
impl PyModel {
    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.checkpoint.save_to_path(&path).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (path, strategy="sim-rw", l=6, seed=0))]
    fn load(path: PathBuf, strategy: &str, l: usize, seed: u64) -> PyResult<Self> {
        Ok(PyModel {
            checkpoint: Checkpoint::load_from_path(&path).map_err(err)?,
            strategy: parse_strategy(strategy)?,
            l,
            seed,
        })
    }

    #[getter]
    fn d_model(&self) -> usize {
        self.checkpoint.params.dims.d_model
    }

    #[getter]
    fn heads(&self) -> usize {
        self.checkpoint.params.dims.heads
    }

    #[getter]
    fn task(&self) -> String {
        match self.checkpoint.task {
            TaskMode::Polarity => "polarity".into(),
            TaskMode::Hate => "hate".into(),
        }
    }

    /// Metrics over the held-out split of `corpus` (dict of floats).
    fn evaluate(&self, py: Python<'_>, corpus: &PyCorpus) -> PyResult<Py<PyAny>> {
        let split = SplitSpec {
            seed: self.seed,
            ..SplitSpec::default()
        };
        let (_, test) = split_instances(&corpus.inner, &split);
        let cfg = self.train_config(self.checkpoint.task);
        let sim = Encoder::Toy(ToyProvider::new(self.seed, cfg.d_model));
        let scorer = self.strategy.needs_model().then_some(&self.checkpoint);
        let report =
            evaluate(&self.checkpoint, &corpus.inner, &test, &cfg, &sim, scorer).map_err(err)?;
        metrics_dict(py, &report)
    }

    /// Class probabilities [pos, neg] for one labeled node id.
    fn predict(&self, corpus: &PyCorpus, target: &str) -> PyResult<(f64, f64)> {
        let target = NodeId::new(target);
        let d = corpus
            .inner
            .discussions
            .iter()
            .find(|d| d.contains(&target))
            .ok_or_else(|| err(format!("node {target:?} not in corpus")))?;
        let cfg = WalkConfig::new(self.l, self.seed);
        let sim = Encoder::Toy(ToyProvider::new(self.seed, self.checkpoint.params.dims.d_model));
        let scorer = self.strategy.needs_model().then_some(&self.checkpoint);
        let sel = select_context(d, &target, &cfg, self.strategy, &sim, scorer, self.checkpoint.t_max)
            .map_err(err)?;
        let (out, _) = gascom::model::forward(
            &self.checkpoint.params,
            &self.checkpoint.encoder,
            d,
            &target,
            &sel,
            self.checkpoint.task,
            self.checkpoint.t_max,
        )
        .map_err(err)?;
        Ok((out.probabilities[0], out.probabilities[1]))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(d_model={}, heads={}, task={}, strategy={})",
            self.checkpoint.params.dims.d_model,
            self.checkpoint.params.dims.heads,
            self.task(),
            self.strategy.cli_name()
        )
    }
}

/// Train a model on the corpus's train split. Returns (model, history)
/// where history is a list of per-epoch dicts.
#[pyfunction]
#[pyo3(signature = (corpus, strategy="sim-rw", l=6, seed=0, epochs=4, d_model=16,
                    heads=2, learning_rate=1e-3, task="hate", context_free=false,
                    self_distill=false))]
#[allow(clippy::too_many_arguments)]
fn train_model(
    py: Python<'_>,
    corpus: &PyCorpus,
    strategy: &str,
    l: usize,
    seed: u64,
    epochs: usize,
    d_model: usize,
    heads: usize,
    learning_rate: f64,
    task: &str,
    context_free: bool,
    self_distill: bool,
) -> PyResult<(PyModel, Vec<Py<PyAny>>)> {
    let strategy = parse_strategy(strategy)?;
    let task: TaskMode = task.parse().map_err(err)?;
    let cfg = TrainConfig {
        seed,
        task,
        epochs,
        learning_rate,
        walk: WalkConfig::new(l, seed),
        strategy,
        d_model,
        heads,
        context_free,
        ..TrainConfig::default()
    };
    let split = SplitSpec {
        seed,
        ..SplitSpec::default()
    };
    let (train_set, test_set) = split_instances(&corpus.inner, &split);
    let sim = Encoder::Toy(ToyProvider::new(seed, d_model));
    let result = if self_distill {
        let mut cfg1 = cfg.clone();
        if cfg1.strategy.needs_model() {
            cfg1.strategy = WalkStrategy::SimilarityRandom;
        }
        train_self_distilled(&corpus.inner, &cfg1, &train_set, &test_set, &sim)
            .map_err(err)?
            .1
    } else {
        train(&corpus.inner, &cfg, &train_set, &test_set, &sim, None).map_err(err)?
    };
    let mut history = Vec::new();
    for e in &result.epochs {
        let entry = metrics_dict(py, &e.eval)?;
        entry
            .bind(py)
            .set_item("mean_train_loss", e.mean_train_loss)?;
        entry.bind(py).set_item("epoch", e.epoch)?;
        history.push(entry);
    }
    let strategy = if self_distill && !strategy.needs_model() {
        WalkStrategy::AttentionRandom
    } else {
        strategy
    };
    Ok((
        PyModel {
            checkpoint: result.checkpoint,
            strategy,
            l,
            seed,
        },
        history,
    ))
}

/// Hashing tokenizer (lowercased words and punctuation, FNV-1a into a
/// 2^16 vocabulary), truncated to `t_max`.
#[pyfunction]
#[pyo3(signature = (text, t_max=128))]
fn tokenize_text(text: &str, t_max: usize) -> Vec<u32> {
    tokenize(text, t_max).tokens
}

#[pymodule]
fn gascom_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize_text, m)?)?;
    Ok(())
}
