fn main() {
    std::process::exit(thinflow::harness::cli_main(std::env::args_os()));
}
