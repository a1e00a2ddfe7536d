fn main() {
    std::process::exit(robust_american::cli::main_with_args(std::env::args_os()));
}
