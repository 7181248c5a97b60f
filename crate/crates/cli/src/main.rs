fn main() {
    std::process::exit(mpim_cli::main_with_args(std::env::args_os()));
}
