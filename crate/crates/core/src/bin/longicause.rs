fn main() {
    std::process::exit(longicause::cli::main_with_args(std::env::args_os()));
}
