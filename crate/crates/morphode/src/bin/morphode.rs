fn main() {
    std::process::exit(morphode::cli::run(std::env::args_os()));
}
