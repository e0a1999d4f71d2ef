fn main() {
    std::process::exit(xnorpose::cli::run(std::env::args_os()));
}
