fn main() {
    env_logger::init();
    std::process::exit(dwarf::cli::run_cli(std::env::args_os()));
}
