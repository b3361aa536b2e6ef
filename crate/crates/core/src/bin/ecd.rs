fn main() -> std::process::ExitCode {
    ecd::cli::main_with_args(std::env::args_os())
}
