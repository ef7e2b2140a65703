fn main() {
    std::process::exit(hjb_blowup::run_command(std::env::args_os()));
}
