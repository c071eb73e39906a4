fn main() {
    std::process::exit(bgi::cli::run());
}
