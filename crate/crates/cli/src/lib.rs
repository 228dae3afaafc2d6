//! Command-line front end: run configuration, argument parsing and the
//! subcommand implementations behind the `glcn` binary.

pub mod args;
pub mod commands;
pub mod config;
pub mod summary;

use args::{Cli, Command};
use glcn_core::Result;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::ExportGraph(a) => commands::export_graph(a),
        Command::ExportEmbeddings(a) => commands::export_embeddings(a),
        Command::GenSynth(a) => commands::gen_synth(a),
    }
}
