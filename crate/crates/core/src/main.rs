fn main() {
    std::process::exit(sovlab::cli::main_with_args(std::env::args_os().collect()));
}
