fn main() {
    std::process::exit(stgcn_refine::cli::run(std::env::args_os()));
}
