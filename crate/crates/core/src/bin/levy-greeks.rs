fn main() {
    std::process::exit(levy_greeks::cli::main_from_env());
}
