fn main() {
    std::process::exit(pcfl::cli::dispatch(std::env::args_os()));
}
