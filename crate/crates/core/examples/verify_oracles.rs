//! The oracle suite behind `flowtrust verify`, plus the same suite with the
//! correction sign flipped.
//!
//! Run with `cargo run --release --example verify_oracles`.

use flowtrust::dynamics::ItoSign;
use flowtrust::harness::{cmd_verify, verify_with_sign};

fn main() -> flowtrust::Result<()> {
    let report = cmd_verify()?;
    print!("{}", report.table());
    println!("\nwith the opposite sign:");
    print!("{}", verify_with_sign(ItoSign::Minus)?.table());
    Ok(())
}
