use std::sync::atomic::AtomicBool;
use std::sync::Arc;

fn main() {
    let interrupt = Arc::new(AtomicBool::new(false));
    for sig in [signal_hook::consts::SIGINT, signal_hook::consts::SIGTERM] {
        if let Err(e) = signal_hook::flag::register(sig, Arc::clone(&interrupt)) {
            eprintln!("error reason=infrastructure code=4: cannot install signal handler: {e}");
            std::process::exit(4);
        }
    }
    std::process::exit(agentsearch::cli::run_cli(std::env::args_os(), &interrupt));
}
