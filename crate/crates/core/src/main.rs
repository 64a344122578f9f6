fn main() {
    std::process::exit(vacua::cli::run(std::env::args_os()));
}
