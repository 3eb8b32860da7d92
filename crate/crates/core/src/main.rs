fn main() {
    std::process::exit(csbp_core::cli::main_with_args(std::env::args_os()));
}
