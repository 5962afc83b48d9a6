fn main() {
    std::process::exit(tenkontract::cli::run(std::env::args()));
}
