fn main() {
    std::process::exit(echomap::cli::main(std::env::args_os()));
}
