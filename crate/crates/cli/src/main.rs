fn main() {
    std::process::exit(radiomap_cli::run(std::env::args_os()));
}
