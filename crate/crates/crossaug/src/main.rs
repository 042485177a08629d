fn main() {
    std::process::exit(crossaug::cli::run(std::env::args_os()));
}
