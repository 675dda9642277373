use std::process::ExitCode;

fn main() -> ExitCode {
    mopdil::cli::main()
}
