//! `train`: run the optimization loop over a benchmark directory, writing a
//! checkpoint bundle and a JSON-lines log. `--resume` picks up an
//! interrupted run and replays it exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use pointfill::harness::{load_model, save_bundle, LogRecord, Trainer};
use pointfill::model::CompletionModel;

use crate::config::{echo_config, load_run_config, print_result};
use crate::dataset;
use crate::error::CliError;

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    steps: u64,
    final_j: Option<f64>,
    checkpoint: &'a Path,
    log: &'a Path,
}

pub fn train(
    data: &Path,
    config_path: &Path,
    out: &Path,
    resume: Option<&PathBuf>,
    log_path: Option<&PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = load_run_config(config_path)?;

    let (mut model, mut trainer) = match resume {
        Some(ckpt) => {
            let (model, tensors) = load_model(ckpt)?;
            if cfg.model != *model.config() {
                eprintln!(
                    "note: --resume uses the checkpoint's architecture; the config file's `model` section is ignored"
                );
                cfg.model = model.config().clone();
            }
            let trainer = Trainer::resume(&model, cfg.train.clone(), &tensors)?;
            (model, trainer)
        }
        None => {
            let model = CompletionModel::new(cfg.model.clone(), cfg.model_seed)?;
            let trainer = Trainer::new(&model, cfg.train.clone())?;
            (model, trainer)
        }
    };
    echo_config(&cfg);

    let train_set = dataset::load_train_set(data)?;
    let total = trainer.total_steps(&train_set);
    let start = trainer.steps_done();
    println!(
        "training: {} objects, {} steps/epoch, steps {start}..{total}",
        train_set.objects.len(),
        trainer.steps_per_epoch(&train_set),
    );

    let log_file: PathBuf =
        log_path.cloned().unwrap_or_else(|| out.with_extension("log.jsonl"));
    let mut log = BufWriter::new(File::create(&log_file).map_err(|e| CliError::io(&log_file, e))?);
    let progress_every = ((total - start) / 20).max(1);

    let mut write_record = |rec: &LogRecord| {
        let line = serde_json::to_string(rec).expect("log record serializes");
        writeln!(log, "{line}").expect("log write");
        if rec.step % progress_every == 0 || rec.step + 1 == total {
            println!(
                "step {} epoch {:.2} j0 {:.6} j1 {:.6} j {:.6} lr {:.6e}",
                rec.step, rec.epoch, rec.j0, rec.j1, rec.j, rec.lr
            );
        }
    };

    let records = trainer.train(&mut model, &train_set, &mut write_record)?;
    save_bundle(out, &model, Some(&trainer.opt))?;

    print_result(&Summary {
        command: "train",
        steps: trainer.steps_done(),
        final_j: records.last().map(|r| r.j),
        checkpoint: out,
        log: &log_file,
    });
    Ok(())
}
