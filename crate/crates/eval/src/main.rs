fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(roq_eval::cli::run(std::env::args_os()) as u8)
}
