//! `inspect`: list every tensor in a checkpoint with its shape and size.
//! Works on any checkpoint file, including ones without model metadata.

use std::path::Path;

use serde::Serialize;

use pointfill::numerics::load_checkpoint;

use crate::config::print_result;
use crate::error::CliError;

#[derive(Serialize)]
struct Summary {
    command: &'static str,
    tensors: usize,
    total_scalars: usize,
}

pub fn inspect(ckpt: &Path) -> Result<(), CliError> {
    let map = load_checkpoint(ckpt)?;
    let mut total = 0usize;
    for (name, tensor) in &map {
        let count = tensor.numel();
        total += count;
        println!("{name}  {:?}  {count}", tensor.shape());
    }
    println!("{} tensors, {total} scalars", map.len());
    print_result(&Summary {
        command: "inspect",
        tensors: map.len(),
        total_scalars: total,
    });
    Ok(())
}
