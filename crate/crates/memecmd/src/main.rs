use std::process::exit;

fn main() {
    exit(memecmd::run(std::env::args_os()));
}
