fn main() {
    std::process::exit(epivo::cli::run_from(std::env::args_os()));
}
