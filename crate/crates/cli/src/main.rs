mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use cqnls_core::io::read_snapshot;
use log::warn;

use commands::Command;
use config::{from_table, parse_override, read_table, set_path, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "cqnls", version, about = "Cubic-quintic NLS experiments on a periodic box")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use this snapshot as the input field; the grid is taken from it.
    #[arg(long, global = true)]
    snapshot: Option<PathBuf>,
    /// Output directory (overrides io.out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Data seed (overrides io.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dotted `key=value` override, applied in order.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut table = match &cli.config {
        Some(p) => read_table(p)?,
        None => toml::Table::new(),
    };
    for o in &cli.overrides {
        let (k, v) = parse_override(o)?;
        set_path(&mut table, &k, v)?;
    }
    if let Some(p) = &cli.snapshot {
        let snap = read_snapshot(p).with_context(|| format!("reading {}", p.display()))?;
        let grid = snap.field.grid();
        let n = grid.n_per_axis();
        let l = grid.box_length();
        if n.iter().any(|&x| x != n[0]) || l.iter().any(|&x| x != l[0]) {
            anyhow::bail!("snapshot grid is not a cube");
        }
        set_path(&mut table, "grid.dim", toml::Value::Integer(grid.dim() as i64))?;
        set_path(&mut table, "grid.n", toml::Value::Integer(n[0] as i64))?;
        set_path(&mut table, "grid.length", toml::Value::Float(l[0]))?;
        set_path(&mut table, "data.kind", toml::Value::String("file".into()))?;
        set_path(&mut table, "data.path", toml::Value::String(p.display().to_string()))?;
    }
    if let Some(seed) = cli.seed {
        set_path(&mut table, "io.seed", toml::Value::Integer(seed as i64))?;
    }
    if let Some(out) = &cli.out {
        set_path(&mut table, "io.out_dir", toml::Value::String(out.display().to_string()))?;
    }
    from_table(table)
}

fn init_threads() {
    let Ok(v) = std::env::var("CQNLS_THREADS") else {
        return;
    };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                warn!("CQNLS_THREADS ignored: {e}");
            }
        }
        _ => warn!("CQNLS_THREADS={v:?} is not a positive integer"),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e
        .chain()
        .filter_map(|c| c.downcast_ref::<cqnls_core::Error>())
        .any(|c| c.is_numerical());
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_threads();
    let res = resolve(&cli).and_then(|cfg| commands::run(cli.command, cfg));
    match res {
        Ok(s) => {
            print!("{}", s.text());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
