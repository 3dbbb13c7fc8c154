fn main() {
    std::process::exit(zspose::cli::run(std::env::args_os()));
}
