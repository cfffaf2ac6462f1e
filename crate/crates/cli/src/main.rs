fn main() {
    std::process::exit(normex_cli::run_cli(std::env::args_os()));
}
