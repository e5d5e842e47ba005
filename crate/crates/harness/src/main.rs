fn main() -> std::process::ExitCode {
    skipcrawl::main_with_args(std::env::args_os())
}
