fn main() {
    std::process::exit(anchor_calib::cli::main_with_args(std::env::args_os()));
}
