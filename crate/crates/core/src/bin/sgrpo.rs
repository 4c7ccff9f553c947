fn main() {
    std::process::exit(sgrpo::cli::main_with_args(std::env::args_os()));
}
