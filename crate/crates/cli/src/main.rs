fn main() -> std::process::ExitCode {
    gaitfield_cli::main_entry()
}
