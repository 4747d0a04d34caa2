fn main() {
    std::process::exit(flame_dwr::cli::run(std::env::args_os()));
}
