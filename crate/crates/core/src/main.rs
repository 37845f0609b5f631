fn main() {
    std::process::exit(pathinv::cli::run(std::env::args_os()));
}
