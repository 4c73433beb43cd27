fn main() {
    std::process::exit(archstyle::run(std::env::args_os()));
}
