fn main() {
    std::process::exit(dld_core::cli::run_from_env());
}
