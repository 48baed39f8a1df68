fn main() {
    std::process::exit(fracsde::cli::main_with_args(std::env::args_os()));
}
