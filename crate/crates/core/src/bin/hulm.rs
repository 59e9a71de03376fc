fn main() {
    std::process::exit(hulm::cli::run(std::env::args_os()));
}
