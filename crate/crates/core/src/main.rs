fn main() {
    std::process::exit(coap_latent::cli::run(std::env::args_os()));
}
