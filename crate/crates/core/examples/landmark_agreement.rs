//! Manual-manual and manual-auto landmark agreement on a phantom.

use histostack::landmarks::agreement_report;
use histostack::phantom::{generate, PhantomSpec};

fn main() -> histostack::Result<()> {
    let ph = generate(&PhantomSpec {
        dims: [64, 64, 32],
        annotators: 4,
        annotator_sd_um: 30.0,
        ..Default::default()
    })?;
    let report = agreement_report(&ph.truth.annotations, &ph.truth.landmarks)?;
    print!("{}", report.to_table());
    Ok(())
}
