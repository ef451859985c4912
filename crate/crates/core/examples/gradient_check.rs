//! Central-difference gradient checks of every primitive, block and
//! baseline model.
//!
//! ```text
//! cargo run --release --example gradient_check -- [seed]
//! ```

use mwpt::autodiff::GRADCHECK_TOLERANCE;
use mwpt::model::ModelConfig;
use mwpt::verify::full_suite;

fn main() -> mwpt::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let checks = full_suite(&ModelConfig::toy(), seed)?;
    for c in &checks {
        println!(
            "{:<4} {:<18} {:>5} entries  max rel err {:.2e}",
            if c.passed() { "ok" } else { "FAIL" },
            c.name,
            c.checked,
            c.max_rel_error
        );
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{} checks, {failed} above {GRADCHECK_TOLERANCE:e}", checks.len());
    Ok(())
}
