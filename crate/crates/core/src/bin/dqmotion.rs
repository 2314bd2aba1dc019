fn main() {
    std::process::exit(dqmotion::cli::main_with_args(std::env::args_os()));
}
