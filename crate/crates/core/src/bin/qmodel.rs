fn main() {
    std::process::exit(qmodel::cli::main_with(std::env::args()));
}
