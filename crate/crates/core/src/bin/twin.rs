fn main() {
    std::process::exit(twin::cli::run_cli(std::env::args_os()));
}
