fn main() -> std::process::ExitCode {
    protossl::cli::run(std::env::args())
}
