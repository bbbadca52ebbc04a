fn main() {
    std::process::exit(qpc::cli::run(std::env::args_os()));
}
