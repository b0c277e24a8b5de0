//! Runs the guide's snippets as doc-tests: `cargo test -p book-tests --doc`.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[cfg(doctest)]
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(measurement, "measurement.md");
chapter!(localization, "localization.md");
chapter!(tracking, "tracking.md");
chapter!(occupancy, "occupancy.md");
chapter!(simulation, "simulation.md");
chapter!(cli, "cli.md");
