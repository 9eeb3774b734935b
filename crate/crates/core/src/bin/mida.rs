fn main() {
    std::process::exit(mida::cli::main_with_args(std::env::args_os()));
}
