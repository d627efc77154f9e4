fn main() {
    std::process::exit(sublinear_cli::run(std::env::args_os().collect()));
}
