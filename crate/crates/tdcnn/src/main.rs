fn main() {
    std::process::exit(tdcnn::cli::run());
}
