use std::io;
use std::process::ExitCode;

// The optimizer allocates and frees a full tape every step; mimalloc keeps
// those pages around instead of returning them to the OS each time.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> ExitCode {
    let code = radcal::cli::run(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code as u8)
}
