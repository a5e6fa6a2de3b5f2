fn main() {
    std::process::exit(jc_oct::cli::run(std::env::args_os()));
}
