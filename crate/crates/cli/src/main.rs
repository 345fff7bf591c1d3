fn main() {
    std::process::exit(fas_cli::run(std::env::args_os()));
}
