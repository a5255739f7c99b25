fn main() {
    std::process::exit(rescast::cli::main_with_args(std::env::args_os()));
}
