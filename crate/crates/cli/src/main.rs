fn main() {
    std::process::exit(anticipation_cli::main_with(std::env::args_os()));
}
