fn main() {
    std::process::exit(hbm_cli::run(std::env::args_os()));
}
