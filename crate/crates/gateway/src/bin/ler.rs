use std::process::ExitCode;

fn main() -> ExitCode {
    ler_gateway::cli::run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}
