fn main() {
    std::process::exit(encryptgan::cli::run(std::env::args_os()));
}
