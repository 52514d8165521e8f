fn main() {
    std::process::exit(asiplab::cli::run(std::env::args_os()));
}
