fn main() {
    std::process::exit(lepage::cli::run(std::env::args_os()));
}
