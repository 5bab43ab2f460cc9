fn main() {
    std::process::exit(tracemine::cli::run());
}
