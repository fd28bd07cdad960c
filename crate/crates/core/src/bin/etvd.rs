use std::process::ExitCode;

fn main() -> ExitCode {
    let code = elu_tv_denoise::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    ExitCode::from(code as u8)
}
