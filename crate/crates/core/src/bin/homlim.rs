fn main() {
    std::process::exit(homlim_core::cli_main());
}
