fn main() {
    std::process::exit(riskscale::cli::run(std::env::args_os()));
}
