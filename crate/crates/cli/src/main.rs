use std::process::ExitCode;

fn main() -> ExitCode {
    ldrec::cli::main()
}
