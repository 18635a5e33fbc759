fn main() {
    std::process::exit(pz::cli::run(std::env::args_os()));
}
