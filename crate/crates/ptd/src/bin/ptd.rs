fn main() {
    std::process::exit(ptd::cli::run());
}
