fn main() {
    std::process::exit(varqbm::cli::cli_main());
}
