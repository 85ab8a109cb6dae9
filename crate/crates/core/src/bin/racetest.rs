fn main() {
    std::process::exit(rpt_core::cli::main_with_process_streams());
}
