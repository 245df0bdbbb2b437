use std::process::ExitCode;

fn main() -> ExitCode {
    evabs::cli::main_entry()
}
