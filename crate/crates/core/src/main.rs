fn main() {
    std::process::exit(selfs::cli::main_exit());
}
