fn main() {
    std::process::exit(msc_occ::cli::dispatch(std::env::args_os()));
}
