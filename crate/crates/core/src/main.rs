fn main() -> std::process::ExitCode {
    fedqk::cli::main_entry()
}
