fn main() {
    std::process::exit(lp_sharpen::cli::run(std::env::args()));
}
