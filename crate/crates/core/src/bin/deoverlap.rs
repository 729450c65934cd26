fn main() {
    std::process::exit(deoverlap::cli::run_command(std::env::args_os()));
}
