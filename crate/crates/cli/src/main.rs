fn main() {
    std::process::exit(mapnav_cli::main_with(std::env::args_os()));
}
