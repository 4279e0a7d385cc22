fn main() {
    std::process::exit(commglyph::run(std::env::args_os()));
}
