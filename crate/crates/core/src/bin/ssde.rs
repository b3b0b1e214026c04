fn main() {
    std::process::exit(ssde_gibbs::cli::run(std::env::args_os()));
}
