fn main() -> std::process::ExitCode {
    tutorsim::cli::run(std::env::args_os())
}
