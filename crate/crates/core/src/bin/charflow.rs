fn main() {
    std::process::exit(charflow::cli::main_with(std::env::args_os()));
}
