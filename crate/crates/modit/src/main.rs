fn main() {
    std::process::exit(modit::cli::main());
}
