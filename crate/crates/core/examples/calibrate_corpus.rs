//! Prints k-sweep accuracy on synthetic corpora for a range of seeds.

use rehab_core::classifier::{self, STANDARD_KS};
use rehab_core::corpus::{synthetic_corpus, DEFAULT_SAMPLE_RATE_HZ};
use rehab_core::signal::SynthConfig;

fn main() {
    let separation: f64 = std::env::args().nth(1).map_or(1.0, |s| s.parse().unwrap());
    let synth = SynthConfig { separation, ..SynthConfig::default() };
    let mut sums = [0.0; 5];
    let seeds: Vec<u64> = (40..60).collect();
    for &seed in &seeds {
        let c = synthetic_corpus(34, 16, DEFAULT_SAMPLE_RATE_HZ, seed, &synth).unwrap();
        let m = classifier::fit(c.train.clone(), 1, false).unwrap();
        let r = classifier::k_sweep(&m, &c.validation, &STANDARD_KS).unwrap();
        let accs: Vec<f64> = r.iter().map(|r| r.accuracy_pct).collect();
        for (s, a) in sums.iter_mut().zip(&accs) {
            *s += a;
        }
        println!("seed {seed}: n={}/{} {:?}", c.train.len(), c.validation.len(), accs);
    }
    println!("mean {:?}", sums.map(|s| s / seeds.len() as f64));
}
