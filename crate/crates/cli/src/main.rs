fn main() {
    std::process::exit(native4k_cli::run(std::env::args_os()));
}
