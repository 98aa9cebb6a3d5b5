fn main() { std::process::exit(nlma::cli::run(std::env::args().skip(1).collect())); }
