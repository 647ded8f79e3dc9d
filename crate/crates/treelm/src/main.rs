fn main() {
    std::process::exit(treelm::cli::run(std::env::args_os()));
}
