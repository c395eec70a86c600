fn main() {
    std::process::exit(rtleval_cli::run(std::env::args_os()));
}
