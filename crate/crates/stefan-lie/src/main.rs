fn main() {
    std::process::exit(stefan_lie::cli::main());
}
