fn main() {
    std::process::exit(lungsound_cli::run(std::env::args_os()));
}
