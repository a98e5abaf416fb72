fn main() {
    std::process::exit(photon_retrieval::cli::main_with(std::env::args_os()));
}
