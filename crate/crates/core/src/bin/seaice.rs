fn main() {
    std::process::exit(seaice::cli::run(std::env::args_os()));
}
