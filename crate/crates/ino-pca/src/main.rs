use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(ino_pca::cli::run() as u8)
}
