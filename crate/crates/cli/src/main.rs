fn main() {
    std::process::exit(descest_cli::run(std::env::args_os()));
}
