fn main() {
    std::process::exit(ulca_server::cli::main());
}
