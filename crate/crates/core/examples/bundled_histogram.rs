//! Regenerates `data/detector1_hist.csv`: 10^6 clicks from detector 1 of the
//! bundled receiver, 20 ps bins, fixed seed.
//!
//! cargo run -p timeleak --example bundled_histogram

use std::fs::File;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use timeleak::estimation::TimingHistogram;
use timeleak::ReceiverModel;

const SEED: u64 = 20_240_611;
const EVENTS: usize = 1_000_000;
const BIN_WIDTH_PS: f64 = 20.0;

fn main() -> timeleak::Result<()> {
    let det = *ReceiverModel::table1().detector(1);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let samples = det.sample(&mut rng, EVENTS);
    // Bin edges on multiples of the width.
    let lo = (samples.iter().cloned().fold(f64::INFINITY, f64::min) / BIN_WIDTH_PS).floor() * BIN_WIDTH_PS;
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0u64; ((hi - lo) / BIN_WIDTH_PS).floor() as usize + 1];
    for t in samples {
        counts[((t - lo) / BIN_WIDTH_PS).floor() as usize] += 1;
    }
    let hist = TimingHistogram::new(lo, BIN_WIDTH_PS, counts)?;
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/detector1_hist.csv");
    hist.write_csv(File::create(&path)?)?;
    println!("wrote {} bins, {} events to {}", hist.len(), hist.total(), path.display());
    Ok(())
}
