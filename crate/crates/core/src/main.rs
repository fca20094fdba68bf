fn main() {
    std::process::exit(sinsim::cli::run(std::env::args_os()));
}
