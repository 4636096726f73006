//! The guide's chapters as doc comments, so `cargo test` runs every Rust
//! snippet in `book/src`.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(molecules, "molecules.md");
chapter!(egnn, "egnn.md");
chapter!(diffusion, "diffusion.md");
chapter!(qed, "qed.md");
chapter!(explain, "explain.md");
chapter!(training, "training.md");
chapter!(cli, "cli.md");
