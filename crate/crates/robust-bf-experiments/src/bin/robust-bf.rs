fn main() {
    std::process::exit(robust_bf_experiments::cli::main_with_args(std::env::args_os()));
}
