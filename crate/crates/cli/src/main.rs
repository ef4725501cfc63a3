// SPDX-License-Identifier: CC0-1.0

fn main() {
    let code = covenant_cli::run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
