fn main() {
    std::process::exit(optdtr::cli::run(std::env::args_os()));
}
