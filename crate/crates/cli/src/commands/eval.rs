//! `eval`: run a checkpoint over the materialized evaluation grid and write
//! the per-category/difficulty metrics report.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

use pointfill::data::Role;
use pointfill::harness::{evaluate, load_model, MetricsReport};

use crate::config::{echo_config, print_result};
use crate::dataset;
use crate::error::CliError;

/// Which manifest entries to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Train,
    Test,
    All,
}

impl RoleArg {
    fn filter(self) -> Option<Role> {
        match self {
            RoleArg::Train => Some(Role::Train),
            RoleArg::Test => Some(Role::Test),
            RoleArg::All => None,
        }
    }
}

#[derive(Serialize)]
struct EchoConfig<'a> {
    data: &'a Path,
    ckpt: &'a Path,
    report: &'a Path,
    role: String,
    model: &'a pointfill::model::ModelConfig,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    n_samples: usize,
    cd_s: f64,
    cd_m: f64,
    cd_h: f64,
    cd_avg: f64,
    fscore_1pct: f64,
    report: &'a Path,
}

/// Sample-weighted mean F-Score over all groups.
fn overall_fscore(report: &MetricsReport) -> f64 {
    let total: usize = report.groups.iter().map(|g| g.n_samples).sum();
    if total == 0 {
        return 0.0;
    }
    report
        .groups
        .iter()
        .map(|g| g.fscore_1pct * g.n_samples as f64)
        .sum::<f64>()
        / total as f64
}

pub fn eval(data: &Path, ckpt: &Path, report_path: &Path, role: RoleArg) -> Result<(), CliError> {
    let (model, _) = load_model(ckpt)?;
    echo_config(&EchoConfig {
        data,
        ckpt,
        report: report_path,
        role: format!("{role:?}").to_lowercase(),
        model: model.config(),
    });

    let samples = dataset::load_eval_samples(data, role.filter())?;
    let report = evaluate(&model, &samples)?;

    let mut w =
        BufWriter::new(File::create(report_path).map_err(|e| CliError::io(report_path, e))?);
    serde_json::to_writer_pretty(&mut w, &report).expect("report serializes");
    writeln!(w).map_err(|e| CliError::io(report_path, e))?;
    w.flush().map_err(|e| CliError::io(report_path, e))?;

    println!("category         difficulty  n    cd_l1     cd_l2     fscore@1%  fidelity");
    for g in &report.groups {
        println!(
            "{:<16} {:<10} {:<4} {:<9.4} {:<9.4} {:<10.4} {:.6}",
            g.category,
            g.difficulty.as_str(),
            g.n_samples,
            g.cd_l1,
            g.cd_l2,
            g.fscore_1pct,
            g.fidelity
        );
    }
    println!(
        "CD-S {:.4}  CD-M {:.4}  CD-H {:.4}  CD-Avg {:.4}  F-Score@1% {:.4}",
        report.cd_s,
        report.cd_m,
        report.cd_h,
        report.cd_avg,
        overall_fscore(&report)
    );

    print_result(&Summary {
        command: "eval",
        n_samples: report.n_samples,
        cd_s: report.cd_s,
        cd_m: report.cd_m,
        cd_h: report.cd_h,
        cd_avg: report.cd_avg,
        fscore_1pct: overall_fscore(&report),
        report: report_path,
    });
    Ok(())
}
