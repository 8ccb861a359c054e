fn main() {
    std::process::exit(dnr::cli::main_with_args(std::env::args_os()));
}
