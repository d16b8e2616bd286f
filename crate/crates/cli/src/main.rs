fn main() {
    std::process::exit(hltf_cli::main_with_args(std::env::args_os()));
}
