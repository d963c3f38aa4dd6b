use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdot::cli;
use sdot::Error;

#[derive(Parser)]
#[command(version, about = "Semi-discrete optimal transport experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let Command::Run { config, out, threads } = Args::parse().command;
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot start {t} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = cli::seed_from_env().and_then(|seed| cli::run(&config, out, seed));
    match result {
        Ok(r) => {
            for (label, facet, d) in &r.duality_violations {
                eprintln!("warning: {label}: facet {facet} gradient lies {d:.3e} outside the target");
            }
            if let Some(rep) = &r.report {
                if let Some(f) = &rep.fits {
                    println!(
                        "slopes: h1 {:.3} l2 {:.3} map {:.3} vertex {:.3} inverse {:.3} w1 {:.3}",
                        f.h1_error.slope,
                        f.l2_error.slope,
                        f.map_l2.slope,
                        f.vertex_l2.slope,
                        f.inverse_map_l2.slope,
                        f.w1_bound.slope
                    );
                }
            }
            if let Some(s) = &r.stability {
                println!("stability: constant {:.4} spread {:.4}", s.constant, s.ratio_spread);
            }
            println!("wrote {}", r.output.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Solve { report, .. } = &e {
                if let Ok(s) = serde_json::to_string_pretty(report) {
                    eprintln!("{s}");
                }
            }
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
