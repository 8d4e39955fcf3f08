fn main() {
    std::process::exit(wavetune_cli::main_with_args(std::env::args_os()));
}
