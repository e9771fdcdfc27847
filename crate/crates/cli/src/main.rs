use std::process::ExitCode;

use clap::Parser;
use dehaze_cli::{exit_code, run_dehaze, run_evaluate, run_synthesize, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Dehaze(args) => run_dehaze(args).map(|p| {
            println!("wrote {}", p.image.display());
            println!("wrote {}", p.transmission.display());
            println!("wrote {}", p.report.display());
            println!("wrote {}", p.manifest.display());
        }),
        Command::Synthesize(args) => run_synthesize(args).map(|p| {
            for f in [&p.hazy, &p.transmission, &p.radiance, &p.manifest] {
                println!("wrote {}", f.display());
            }
        }),
        Command::Evaluate(args) => run_evaluate(args).map(|text| {
            if args.output.is_none() {
                print!("{text}");
            }
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
