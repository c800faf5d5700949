fn main() {
    let code = majority_lab::cli::dispatch(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
