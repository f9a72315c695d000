fn main() {
    std::process::exit(radner_core::cli::run());
}
