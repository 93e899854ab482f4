fn main() {
    std::process::exit(nwidth::cli::main_with(std::env::args_os()));
}
