fn main() -> std::process::ExitCode {
    magicsim::cli::main()
}
