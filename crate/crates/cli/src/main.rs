fn main() {
    std::process::exit(perdl_cli::run(std::env::args_os()));
}
