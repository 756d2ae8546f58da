fn main() {
    std::process::exit(dfssmvep_cli::run(std::env::args_os()));
}
