fn main() { std::process::exit(sen::cli::main()); }
