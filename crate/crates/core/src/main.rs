fn main() {
    env_logger::init();
    std::process::exit(aerosim::cli::main_with(std::env::args_os()));
}
