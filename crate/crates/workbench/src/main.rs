fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,highs=error".into()))
        .with_writer(std::io::stderr)
        .init();
    std::process::exit(fomcert_workbench::cli::run_cli(std::env::args_os()));
}
