use std::panic;
use std::process::ExitCode;

use kahler_ot::cli::{run, EXIT_NUMERICAL};

fn main() -> ExitCode {
    panic::set_hook(Box::new(|info| {
        eprintln!("internal error: {info}");
    }));
    let code = panic::catch_unwind(|| {
        let mut out = std::io::stdout().lock();
        let mut err = std::io::stderr().lock();
        run(std::env::args_os(), &mut out, &mut err)
    })
    .unwrap_or(EXIT_NUMERICAL);
    ExitCode::from(code as u8)
}
