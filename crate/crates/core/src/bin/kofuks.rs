fn main() {
    std::process::exit(kofuks::cli::main_with_args(std::env::args_os()));
}
