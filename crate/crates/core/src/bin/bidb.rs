fn main() {
    std::process::exit(bidb::cli::main_with_args(std::env::args_os()));
}
