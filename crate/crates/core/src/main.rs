fn main() {
    std::process::exit(riskgrad::cli::run(std::env::args_os()));
}
