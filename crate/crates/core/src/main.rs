fn main() {
    std::process::exit(posdistill::cli::main());
}
