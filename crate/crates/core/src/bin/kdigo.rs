fn main() {
    std::process::exit(kdigo::cli::run(std::env::args_os()));
}
