fn main() {
    std::process::exit(scenevote_core::cli::dispatch(std::env::args_os()));
}
