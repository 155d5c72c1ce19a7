use clap::Parser;

fn main() {
    env_logger::init();
    let cli = mobilisim_cli::Cli::parse();
    match mobilisim_cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
