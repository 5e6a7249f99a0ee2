fn main() {
    std::process::exit(trust_pomdp::cli::run());
}
