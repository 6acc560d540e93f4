fn main() {
    std::process::exit(causal_gap::cli::main_with_args(std::env::args_os()));
}
