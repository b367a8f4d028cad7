//! Seeded mini-batch training, evaluation and checkpoint-backed inference.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EmbeddingStore, EncoderError, EncoderInputs};
use crate::exec::{evaluate_dataset, Metrics};
use crate::kernel::{read_checkpoint, write_checkpoint, AdamState, Graph, KernelError, ParamStore};
use crate::slots::{predict_slots, ModelConfig, SlotError, DEFAULT_MAX_VAL_LEN};
use crate::sqlgen::{assemble, SqlQuery};
use crate::table::Table;
use crate::typerec::{recognize, Gazetteer, Mode};

use super::data::{DataError, Example};
use super::loss::{example_loss, prepare, PrepareError, Prepared};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Bidirectional encoder width; each direction gets half.
    pub hidden: usize,
    /// Type embedding width. Defaults to the word width, which content mode
    /// requires.
    pub type_dim: Option<usize>,
    pub dropout: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub mode: Mode,
    pub max_val_len: usize,
    pub embeddings: Vec<PathBuf>,
    pub gazetteer: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 120,
            type_dim: None,
            dropout: 0.3,
            batch_size: 64,
            learning_rate: 1e-3,
            epochs: 10,
            seed: 0,
            mode: Mode::Content,
            max_val_len: DEFAULT_MAX_VAL_LEN,
            embeddings: Vec::new(),
            gazetteer: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {msg}")]
    ConfigFile { path: String, msg: String },
    #[error("unknown table id {0:?}")]
    MissingTable(String),
    #[error("no training examples")]
    NoExamples,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Prepare(#[from] PrepareError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Slot(#[from] SlotError),
    #[error("{0}")]
    Exec(#[from] crate::exec::ExecError),
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.hidden < 2 || self.hidden % 2 != 0 {
            return bad("hidden must be an even width of at least 2");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path).map_err(|source| TrainError::Io { path: path.display().to_string(), source })?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| TrainError::ConfigFile { path: path.display().to_string(), msg: e.to_string() })?;
        // Relative resource paths are taken from the config's directory.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.embeddings.iter_mut().chain(cfg.gazetteer.as_mut()) {
            *p = base.join(&*p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Model sizes for embeddings of width `word_dim`.
    pub fn model_config(&self, word_dim: usize) -> Result<ModelConfig, TrainError> {
        let type_dim = self.type_dim.unwrap_or(word_dim);
        if self.mode == Mode::Content && type_dim != word_dim {
            return Err(TrainError::Config(format!(
                "content mode needs type_dim == word width ({word_dim}), got {type_dim}"
            )));
        }
        Ok(ModelConfig { hidden: self.hidden / 2, word_dim, type_dim, max_val_len: self.max_val_len })
    }
}

/// Everything the model reads besides parameters.
pub struct Resources {
    pub embeddings: EmbeddingStore,
    pub gazetteer: Gazetteer,
}

impl Resources {
    pub fn load(cfg: &TrainConfig) -> Result<Self, TrainError> {
        let embeddings = super::data::load_embeddings(&cfg.embeddings)?;
        let gazetteer = match &cfg.gazetteer {
            Some(p) => super::data::load_gazetteer(p)?,
            None => Gazetteer::new(),
        };
        Ok(Self { embeddings, gazetteer })
    }
}

pub fn prepare_all(
    examples: &[Example],
    tables: &BTreeMap<String, Table>,
    mode: Mode,
    res: &Resources,
) -> Result<Vec<Prepared>, TrainError> {
    examples
        .iter()
        .map(|ex| {
            let t = tables.get(&ex.table_id).ok_or_else(|| TrainError::MissingTable(ex.table_id.clone()))?;
            Ok(prepare(ex, t, mode, &res.gazetteer, &res.embeddings)?)
        })
        .collect()
}

/// Inference on a prepared example; conditioned slots use predicted
/// antecedents.
pub fn predict_prepared(store: &ParamStore, model: &ModelConfig, prep: &Prepared) -> Result<SqlQuery, TrainError> {
    let slots = predict_slots(store, model, &prep.inputs)?;
    Ok(assemble(&slots, &prep.surface).0)
}

pub fn evaluate_prepared(
    store: &ParamStore,
    model: &ModelConfig,
    preps: &[Prepared],
    tables: &BTreeMap<String, Table>,
) -> Result<Metrics, TrainError> {
    let preds = preps.iter().map(|p| predict_prepared(store, model, p)).collect::<Result<Vec<_>, _>>()?;
    let golds: Vec<SqlQuery> = preps.iter().map(|p| p.gold.clone()).collect();
    let ids: Vec<&str> = preps.iter().map(|p| p.table_id.as_str()).collect();
    Ok(evaluate_dataset(&preds, &golds, &ids, tables)?)
}

/// Training state that advances one epoch at a time.
pub struct Trainer {
    pub model: ModelConfig,
    store: ParamStore,
    adam: AdamState,
    rng: ChaCha8Rng,
    dropout: f64,
    batch_size: usize,
    epoch: usize,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig, model: ModelConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        Ok(Self {
            model,
            store: model.init_params(cfg.seed)?,
            adam: AdamState::new(cfg.learning_rate),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c4),
            dropout: cfg.dropout,
            batch_size: cfg.batch_size,
            epoch: 0,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One pass over `data` in a seeded shuffled order with one Adam update
    /// per mini-batch. Returns the mean example loss.
    pub fn run_epoch(&mut self, data: &[Prepared]) -> Result<f64, TrainError> {
        if data.is_empty() {
            return Err(TrainError::NoExamples);
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for batch in order.chunks(self.batch_size) {
            self.store.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let mut g = Graph::with_dropout(self.dropout, self.rng.gen());
                let loss = example_loss(&mut g, &self.store, &data[i])?;
                total += g.scalar(loss);
                let scaled = g.scale(loss, scale);
                g.backward(scaled, &mut self.store)?;
            }
            self.adam.step(&mut self.store)?;
        }
        self.epoch += 1;
        Ok(total / data.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_acc_qm: Option<f64>,
}

/// Prepared training and optional development data.
pub struct TrainData<'a> {
    pub train: &'a [Prepared],
    pub dev: Option<(&'a [Prepared], &'a BTreeMap<String, Table>)>,
}

/// Runs `cfg.epochs` epochs, keeping the parameters with the best dev
/// Acc_qm (the last epoch without dev data), and writes them to
/// `checkpoint` when given. `on_epoch` sees each log entry as it is made.
pub fn train(
    cfg: &TrainConfig,
    model: ModelConfig,
    data: &TrainData<'_>,
    checkpoint: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(ParamStore, Vec<EpochLog>), TrainError> {
    let mut trainer = Trainer::new(cfg, model)?;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ParamStore)> = None;
    for _ in 0..cfg.epochs {
        let train_loss = trainer.run_epoch(data.train)?;
        let dev_acc_qm = match data.dev {
            Some((dev, tables)) => Some(evaluate_prepared(trainer.store(), &model, dev, tables)?.acc_qm),
            None => None,
        };
        let entry = EpochLog { epoch: trainer.epoch(), train_loss, dev_acc_qm };
        on_epoch(&entry);
        let score = dev_acc_qm.unwrap_or(f64::INFINITY);
        if best.as_ref().map_or(true, |(b, _)| score > *b || score.is_infinite()) {
            best = Some((score, trainer.store().clone()));
        }
        log.push(entry);
    }
    let store = best.map_or_else(|| trainer.store().clone(), |(_, s)| s);
    if let Some(path) = checkpoint {
        save_checkpoint(&store, path)?;
    }
    Ok((store, log))
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), TrainError> {
    let io = |source| TrainError::Io { path: path.display().to_string(), source };
    let f = fs::File::create(path).map_err(io)?;
    write_checkpoint(store, std::io::BufWriter::new(f))?;
    Ok(())
}

pub fn load_checkpoint(model: &ModelConfig, path: &Path) -> Result<ParamStore, TrainError> {
    let f = fs::File::open(path).map_err(|source| TrainError::Io { path: path.display().to_string(), source })?;
    Ok(read_checkpoint(&model.init_params(0)?, std::io::BufReader::new(f))?)
}

/// Question → query with trained parameters.
pub fn predict(
    store: &ParamStore,
    model: &ModelConfig,
    question: &str,
    table: &Table,
    mode: Mode,
    res: &Resources,
) -> Result<SqlQuery, TrainError> {
    let tagged = recognize(question, &table.schema, Some(table), mode, &res.gazetteer)
        .map_err(|source| PrepareError::Tagging { question: question.to_string(), source })?;
    let inputs = EncoderInputs::new(&tagged, &table.schema, &res.embeddings)?;
    let surface: Vec<String> = tagged.char_spans.iter().map(|&(a, b)| question[a..b].to_string()).collect();
    let slots = predict_slots(store, model, &inputs)?;
    Ok(assemble(&slots, &surface).0)
}
