fn main() -> std::process::ExitCode {
    continuum_backstep::cli::run()
}
