fn main() {
    std::process::exit(amortis::harness::cli::run(std::env::args_os()));
}
