fn main() {
    std::process::exit(spinfk::cli::main_with_args(std::env::args_os()));
}
