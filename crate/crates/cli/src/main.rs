fn main() {
    std::process::exit(mmpo_cli::run_command(std::env::args_os()));
}
