fn main() {
    std::process::exit(uqfuse::run(std::env::args_os()));
}
