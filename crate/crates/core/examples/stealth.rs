//! When can an out-of-range change hide inside a group sum?

use mudpqfed::adversary::{guaranteed_threshold, stealth_probe};
use mudpqfed::quantfl::Codebook;

fn main() {
    for d in [2, 4] {
        let t = guaranteed_threshold(d, Codebook::Ternary);
        println!("d={d}: any change of {t} or more is always caught");
        for change in [0, 1, 2, 5, 8, 9, 30] {
            let r = stealth_probe(d, Codebook::Ternary, change, 10);
            println!(
                "  change {change:>2}: sums reach {:?} vs legitimate {:?}, guaranteed {}, may hide {}",
                r.reachable, r.legitimate, r.guaranteed_detection, r.may_hide
            );
        }
    }
}
