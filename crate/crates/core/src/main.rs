fn main() {
    std::process::exit(mec_sched::cli::main_entry());
}
