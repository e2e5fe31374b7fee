fn main() {
    std::process::exit(polywell::cli::main_with_args(std::env::args_os()));
}
