fn main() {
    std::process::exit(unlearn_lab::harness::run_cli(std::env::args_os()));
}
