fn main() -> std::process::ExitCode {
    holdscan::cli::main()
}
