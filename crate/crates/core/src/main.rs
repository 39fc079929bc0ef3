fn main() -> std::process::ExitCode {
    sap_unlearn::cli::main()
}
