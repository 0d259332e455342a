fn main() {
    std::process::exit(alphaforge::cli::run(std::env::args_os()));
}
