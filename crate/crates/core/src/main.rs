fn main() {
    std::process::exit(neoseize::cli::run(std::env::args_os()));
}
