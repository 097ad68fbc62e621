fn main() {
    std::process::exit(medvl::cli::dispatch(std::env::args_os()));
}
