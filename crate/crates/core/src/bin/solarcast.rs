fn main() {
    std::process::exit(solarcast::cli::run(std::env::args_os()));
}
