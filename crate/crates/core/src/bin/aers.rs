fn main() {
    std::process::exit(aers_core::cli::run(std::env::args_os()));
}
