//! Writes the synthetic charges dataset as CSV.
//!
//!     cargo run --example charges_dataset -- data/charges.csv [n] [seed]

use leanreg::datasets::charges_like;

fn main() -> leanreg::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "charges.csv".into());
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let ds = charges_like(n, seed)?;
    let file = std::fs::File::create(&path).map_err(|e| leanreg::Error::Invalid(format!("{path}: {e}")))?;
    ds.write_csv(file)?;
    println!("wrote {} rows to {path}", ds.n());
    Ok(())
}
