use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use sketchsql::exec::evaluate_dataset;
use sketchsql::harness::data::{load_dataset, load_gazetteer, load_tables};
use sketchsql::harness::synth::{generate, SynthConfig};
use sketchsql::harness::train::{
    evaluate_prepared, load_checkpoint, predict, prepare_all, train, Resources, TrainConfig, TrainData,
};
use sketchsql::sqlgen::{render, SqlQuery};
use sketchsql::table::Table;
use sketchsql::typerec::{recognize, Gazetteer, Mode};

#[derive(Parser)]
#[command(name = "sketchsql", version, about = "Type-aware sketch-based text-to-SQL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tag question tokens and print them as JSON.
    Tag {
        #[arg(long)]
        question: String,
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, default_value_t = Mode::Content)]
        mode: Mode,
        #[arg(long)]
        gazetteer: Option<PathBuf>,
    },
    /// Train the slot models and write the best checkpoint.
    Train {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        dev_examples: Option<PathBuf>,
        /// Tables of the dev split; defaults to --tables.
        #[arg(long)]
        dev_tables: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Print the six accuracies as JSON.
    Eval {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        tables: PathBuf,
        /// Predicted queries, one JSON object per line, parallel to --examples.
        #[arg(long, conflicts_with = "checkpoint")]
        preds: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Translate one question into SQL.
    Predict {
        #[arg(long)]
        question: String,
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write the synthetic toy corpus and a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 240)]
        train: usize,
        #[arg(long, default_value_t = 60)]
        heldout: usize,
    },
}

#[derive(Args)]
struct TableArgs {
    /// JSON-lines tables file.
    #[arg(long)]
    tables: PathBuf,
    /// Required when the file holds more than one table.
    #[arg(long)]
    table_id: Option<String>,
}

impl TableArgs {
    fn load(&self) -> Result<Table> {
        let mut tables = load_tables(&self.tables)?;
        match &self.table_id {
            Some(id) => tables.remove(id).ok_or_else(|| anyhow!("unknown table id {id:?}")),
            None if tables.len() == 1 => Ok(tables.into_values().next().expect("one table")),
            None => bail!("{} holds {} tables; pass --table-id", self.tables.display(), tables.len()),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML training config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if cfg.embeddings.is_empty() {
            bail!("no embedding files configured; set `embeddings` in --config");
        }
        Ok(cfg)
    }

    fn checkpoint(&self) -> Result<&Path> {
        self.checkpoint.as_deref().ok_or_else(|| anyhow!("--checkpoint is required"))
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Tag { question, table, mode, gazetteer } => {
            let t = table.load()?;
            let gaz = match gazetteer {
                Some(p) => load_gazetteer(&p)?,
                None => Gazetteer::new(),
            };
            let tq = recognize(&question, &t.schema, Some(&t), mode, &gaz)?;
            let tags: Vec<String> = tq.tags.iter().map(|tag| tag.label(&t.schema)).collect();
            println!("{}", serde_json::json!({ "tokens": tq.tokens, "tags": tags }));
        }
        Command::Train { examples, tables, dev_examples, dev_tables, run, epochs } => {
            let mut cfg = run.config()?;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let res = Resources::load(&cfg)?;
            let model = cfg.model_config(res.embeddings.dim())?;
            let (train_ex, train_tables) = load_dataset(&examples, &tables)?;
            let train_preps = prepare_all(&train_ex, &train_tables, cfg.mode, &res)?;
            let dev = match dev_examples {
                Some(p) => {
                    let (ex, t) = load_dataset(&p, dev_tables.as_deref().unwrap_or(&tables))?;
                    let preps = prepare_all(&ex, &t, cfg.mode, &res)?;
                    Some((preps, t))
                }
                None => None,
            };
            let data = TrainData { train: &train_preps, dev: dev.as_ref().map(|(p, t)| (p.as_slice(), t)) };
            train(&cfg, model, &data, run.checkpoint.as_deref(), |entry| {
                println!("{}", serde_json::to_string(entry).expect("log entries serialize"));
            })?;
        }
        Command::Eval { examples, tables, preds, run } => {
            let (ex, t) = load_dataset(&examples, &tables)?;
            let metrics = match preds {
                Some(p) => {
                    let preds = load_preds(&p)?;
                    let golds: Vec<SqlQuery> = ex.iter().map(|e| e.gold.clone()).collect();
                    let ids: Vec<&str> = ex.iter().map(|e| e.table_id.as_str()).collect();
                    evaluate_dataset(&preds, &golds, &ids, &t)?
                }
                None => {
                    let cfg = run.config()?;
                    let res = Resources::load(&cfg)?;
                    let model = cfg.model_config(res.embeddings.dim())?;
                    let store = load_checkpoint(&model, run.checkpoint()?)?;
                    let preps = prepare_all(&ex, &t, cfg.mode, &res)?;
                    evaluate_prepared(&store, &model, &preps, &t)?
                }
            };
            println!("{}", serde_json::to_string(&metrics)?);
        }
        Command::Predict { question, table, run } => {
            let cfg = run.config()?;
            let t = table.load()?;
            let res = Resources::load(&cfg)?;
            let model = cfg.model_config(res.embeddings.dim())?;
            let store = load_checkpoint(&model, run.checkpoint()?)?;
            let q = predict(&store, &model, &question, &t, cfg.mode, &res)?;
            println!("{}", render(&q, &t.schema, &t.id));
        }
        Command::Synth { out, seed, train, heldout } => {
            let corpus = generate(&SynthConfig { train, heldout, seed, ..SynthConfig::default() });
            corpus.write(&out)?;
            let cfg = TrainConfig {
                embeddings: vec!["embeddings.txt".into()],
                gazetteer: Some("gazetteer.tsv".into()),
                ..TrainConfig::default()
            };
            std::fs::write(out.join("config.toml"), toml::to_string(&cfg)?)
                .with_context(|| format!("writing {}", out.join("config.toml").display()))?;
            eprintln!("wrote {} train and {} held-out examples to {}", corpus.train.len(), corpus.heldout.len(), out.display());
        }
    }
    Ok(())
}

/// Queries one per line, either bare or under an "sql" key.
fn load_preds(path: &Path) -> Result<Vec<SqlQuery>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut v: Value = serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        if let Some(inner) = v.get_mut("sql") {
            v = inner.take();
        }
        out.push(serde_json::from_value(v).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}
