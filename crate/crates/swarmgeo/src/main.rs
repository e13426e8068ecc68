fn main() {
    std::process::exit(swarmgeo::harness::cli(std::env::args_os()));
}
