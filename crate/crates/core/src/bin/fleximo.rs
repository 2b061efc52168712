fn main() {
    std::process::exit(fleximo::io::cli::run(std::env::args_os()));
}
