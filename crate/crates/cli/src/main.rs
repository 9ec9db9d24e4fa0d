fn main() {
    std::process::exit(epmakit_cli::run_cli(std::env::args_os()));
}
