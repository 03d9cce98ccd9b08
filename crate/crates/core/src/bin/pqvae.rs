fn main() {
    std::process::exit(pqvae::cli::main_with_args(std::env::args_os()));
}
