fn main() {
    std::process::exit(cochord::cli_io::main_with_args(std::env::args_os()));
}
