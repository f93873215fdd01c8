fn main() {
    std::process::exit(claimclust_cli::run(std::env::args_os()));
}
