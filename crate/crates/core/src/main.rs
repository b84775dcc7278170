fn main() {
    std::process::exit(aaa::cli::run(std::env::args_os()));
}
