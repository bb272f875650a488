fn main() {
    std::process::exit(taskgrid::cli::cli_main(std::env::args_os()));
}
