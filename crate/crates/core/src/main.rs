fn main() {
    std::process::exit(boxflow::harness::cli::main_with_args(std::env::args_os()));
}
