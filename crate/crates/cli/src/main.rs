fn main() {
    std::process::exit(rovella_cli::main_with(std::env::args_os()));
}
