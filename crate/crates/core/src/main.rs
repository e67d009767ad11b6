fn main() {
    std::process::exit(mrsdistill::cli::dispatch(std::env::args_os()));
}
