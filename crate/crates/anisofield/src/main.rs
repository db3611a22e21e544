fn main() {
    std::process::exit(anisofield::cli::cli_main());
}
