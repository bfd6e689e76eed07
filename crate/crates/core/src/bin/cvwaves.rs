fn main() {
    std::process::exit(cvwaves::cli::run(std::env::args_os()));
}
