fn main() {
    std::process::exit(fpvit::cli::main_with_args(std::env::args_os()));
}
