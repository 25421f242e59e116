fn main() {
    std::process::exit(gcfx::cli::run(std::env::args_os()));
}
