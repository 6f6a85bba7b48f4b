use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::Parser;
use crsynth_cli::{run, Cli, EXIT_INTERRUPTED};

static CANCEL: AtomicBool = AtomicBool::new(false);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    // first Ctrl-C drains in-flight sessions and flushes the checkpoint; second one exits
    let handler = ctrlc::set_handler(|| {
        if CANCEL.swap(true, Ordering::SeqCst) {
            std::process::exit(EXIT_INTERRUPTED);
        }
        eprintln!("interrupt received; finishing in-flight sessions");
    });
    if let Err(e) = handler {
        log::warn!("cannot install Ctrl-C handler: {e}");
    }
    let out = run(&cli, &CANCEL);
    for s in &out.stages {
        let line = serde_json::json!({ "stage": s.stage, "skipped": s.skipped, "problems": s.problems.len(), "report": s.report });
        println!("{line}");
        for p in s.problems.iter().take(5) {
            log::warn!("{}: {p}", s.stage);
        }
    }
    if let Some(e) = &out.error {
        eprintln!("error: {e}");
    }
    ExitCode::from(out.code as u8)
}
