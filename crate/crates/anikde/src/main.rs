fn main() {
    std::process::exit(anikde::cli::main_with(std::env::args_os()));
}
