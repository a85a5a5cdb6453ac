fn main() {
    std::process::exit(catlab::cli::main_with_args(std::env::args_os().collect()));
}
