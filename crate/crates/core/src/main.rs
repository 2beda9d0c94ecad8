fn main() {
    std::process::exit(freeproc::cli::run(std::env::args_os()));
}
