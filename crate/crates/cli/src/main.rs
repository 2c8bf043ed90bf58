fn main() {
    std::process::exit(sparsecov_cli::main_with_args(std::env::args_os().collect()));
}
