fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GEOPATH_LOG", "info"))
        .format_timestamp(None)
        .init();
    std::process::exit(geopath::cli::main_with_args(std::env::args_os()));
}
