fn main() {
    std::process::exit(effcov::bench::run_cli(std::env::args_os()));
}
