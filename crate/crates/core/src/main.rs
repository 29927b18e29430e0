fn main() {
    if let Err(e) = obstacle_context::cli::run(std::env::args_os()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
