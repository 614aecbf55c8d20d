fn main() {
    std::process::exit(lgpc::cli::main_with_args(std::env::args_os()));
}
