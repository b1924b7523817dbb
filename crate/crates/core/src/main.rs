fn main() {
    std::process::exit(lorentz_embed::cli::run(std::env::args_os()));
}
