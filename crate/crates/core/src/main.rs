fn main() {
    std::process::exit(kgemb::cli::dispatch(std::env::args_os()));
}
