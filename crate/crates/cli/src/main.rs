fn main() {
    std::process::exit(zklora_cli::run(std::env::args_os()));
}
