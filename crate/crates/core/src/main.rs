fn main() {
    std::process::exit(ktsim::cli::main());
}
