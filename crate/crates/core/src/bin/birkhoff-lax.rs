fn main() {
    std::process::exit(birkhoff_lax::cli::run_from_args(std::env::args_os()));
}
