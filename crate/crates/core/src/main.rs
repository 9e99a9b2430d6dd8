fn main() {
    std::process::exit(verk::cli::main_with_args(std::env::args_os()));
}
