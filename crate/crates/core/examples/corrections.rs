//! Prints the discovered per-pattern correction table.
use timebin_amp::protocol::{correction_for, success_patterns};

fn main() -> timebin_amp::Result<()> {
    for pattern in success_patterns() {
        println!("{pattern}  {}", correction_for(&pattern)?);
    }
    Ok(())
}
