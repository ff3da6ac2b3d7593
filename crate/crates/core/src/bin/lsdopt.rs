fn main() {
    std::process::exit(levelset_density::cli::cli_main(std::env::args_os()));
}
