fn main() {
    std::process::exit(nanotherm::cli::main_with_args(std::env::args_os()));
}
