fn main() {
    std::process::exit(nepcert::cli::run());
}
