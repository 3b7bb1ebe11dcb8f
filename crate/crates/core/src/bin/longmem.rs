fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("LONGMEM_LOG")).init();
    std::process::exit(longmem::cli::run(std::env::args_os()));
}
