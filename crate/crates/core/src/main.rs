fn main() {
    std::process::exit(dsrm::cli::run(std::env::args_os()));
}
