fn main() {
    std::process::exit(otfs_isac::cli::run(std::env::args_os()));
}
