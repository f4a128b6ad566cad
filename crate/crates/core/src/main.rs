fn main() {
    std::process::exit(nsgmm::cli::run(std::env::args_os()));
}
