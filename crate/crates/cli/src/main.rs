fn main() {
    let seed = std::env::var("PLINK_SEED").ok();
    std::process::exit(plink_cli::commands::run(std::env::args(), seed.as_deref()));
}
