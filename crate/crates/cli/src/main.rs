fn main() {
    std::process::exit(fingergan_cli::run(std::env::args_os()));
}
