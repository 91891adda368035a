fn main() {
    std::process::exit(propp::cli::run(std::env::args_os()));
}
