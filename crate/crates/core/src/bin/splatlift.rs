fn main() {
    splatlift::cli::main()
}
