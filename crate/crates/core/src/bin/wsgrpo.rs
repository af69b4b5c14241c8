fn main() {
    std::process::exit(wsgrpo::cli::run(std::env::args_os()));
}
