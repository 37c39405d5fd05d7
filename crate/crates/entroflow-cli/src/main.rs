fn main() {
    todo!("wire subcommands");
}
