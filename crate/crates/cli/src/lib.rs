//! Command-line front end for the radio-map toolkit.

/// Entry point shared by the binary and in-process tests.
pub fn run<I, S>(_args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    // TODO: wire up subcommands once the core pipeline lands.
    0
}
