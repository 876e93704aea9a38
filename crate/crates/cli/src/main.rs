fn main() {
    std::process::exit(ccm_cli::run_cli(std::env::args_os()));
}
