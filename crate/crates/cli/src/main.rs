use std::io::Write;

fn main() {
    // panics are reported as error records by `run`
    std::panic::set_hook(Box::new(|_| {}));
    let out = ttkit_cli::run(std::env::args_os());
    let _ = std::io::stdout().write_all(out.stdout.as_bytes());
    let _ = std::io::stderr().write_all(out.stderr.as_bytes());
    std::process::exit(out.code);
}
