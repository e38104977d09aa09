fn main() {
    std::process::exit(pinchflow::cli::run_cli(std::env::args()));
}
