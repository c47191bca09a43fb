fn main() -> anyhow::Result<()> {
    clinicode::cli::main()
}
