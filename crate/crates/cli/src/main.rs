fn main() {
    std::process::exit(mpg_cli::cli_main(std::env::args_os()));
}
