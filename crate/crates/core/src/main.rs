fn main() {
    std::process::exit(bipan::cli::main());
}
