fn main() {
    std::process::exit(propagation_incentives::cli::run(std::env::args_os()));
}
