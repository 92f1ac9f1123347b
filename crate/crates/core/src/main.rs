fn main() {
    std::process::exit(swdae::cli::main_with_args(std::env::args_os()));
}
