fn main() {
    std::process::exit(nlscont::cli::main_with_args(std::env::args_os()));
}
