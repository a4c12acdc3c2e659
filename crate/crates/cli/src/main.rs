use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ldl_cli::{command_loop, exit_code, resolve, run_batch};
use ldl_core::session::{Session, SessionOptions};

/// Interactive interpreter and batch runner for ldl programs.
#[derive(Parser, Debug)]
#[command(name = "ldl", version)]
struct Args {
    /// Program file to load before reading commands.
    program: Option<String>,
    /// Shuffle base facts with this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Step limit for XY programs.
    #[arg(long, default_value_t = SessionOptions::default().max_steps)]
    max_steps: usize,
    /// Evaluate external relations locally instead of generating SQL.
    #[arg(long)]
    no_offload: bool,
    /// Print node trace lines to standard error.
    #[arg(long)]
    trace: bool,
    /// Run the commands in this file, then exit.
    #[arg(long, value_name = "QUERY_FILE", requires = "program")]
    batch: Option<PathBuf>,
}

fn main() -> anyhow::Result<ExitCode> {
    let args = Args::parse();
    let opts = SessionOptions { seed: args.seed, max_steps: args.max_steps, offload: !args.no_offload, trace: args.trace, ..SessionOptions::default() };
    let mut session = Session::new(opts);
    let (out, err) = (std::io::stdout().lock(), std::io::stderr().lock());
    let code = match (&args.batch, &args.program) {
        (Some(queries), Some(program)) => run_batch(&mut session, &resolve(program), queries, out, err),
        _ => {
            if let Some(program) = &args.program {
                if let Err(e) = session.load_file(resolve(program)) {
                    eprintln!("error: {e}");
                    return Ok(ExitCode::from(exit_code(&e) as u8));
                }
            }
            let stdin = std::io::stdin();
            let prompt = stdin.is_terminal();
            command_loop(&mut session, stdin.lock(), out, err, prompt)
        }
    };
    Ok(ExitCode::from(code as u8))
}
