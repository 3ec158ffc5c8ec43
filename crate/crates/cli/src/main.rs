fn main() {
    std::process::exit(hse_cli::main_with_args(std::env::args_os()));
}
