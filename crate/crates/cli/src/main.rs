fn main() {
    std::process::exit(fastedi_cli::run(std::env::args_os()));
}
