use std::io::{self, BufReader};

fn main() {
    let stdin = io::stdin();
    let mut input = BufReader::new(stdin.lock());
    let code = powerdesk::service::run_command(std::env::args_os(), &mut input, &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
