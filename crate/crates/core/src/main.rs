fn main() {
    std::process::exit(evostab::cli::main_with_args(std::env::args_os()));
}
