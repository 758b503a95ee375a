//! Detection rates over attacker placements, and TPR over change size and
//! tampered count.

use std::path::PathBuf;

use mudpqfed::harness::{sweep_detection, sweep_tpr_surface, table_placements, ExperimentConfig};

fn main() -> mudpqfed::Result<()> {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let detection = ExperimentConfig::load(&configs.join("detection.toml"))?;
    println!("n_c  n_a  same  tpr%    fpr%   identified");
    for r in sweep_detection(&detection, &table_placements())? {
        println!(
            "{:>3}  {:>3}  {:>5} {:>6}  {:>6}  {:?}",
            r.clients,
            r.attackers,
            r.same_group,
            r.tpr_percent(),
            r.fpr_percent(),
            r.identified
        );
    }

    let tpr = ExperimentConfig::load(&configs.join("tpr_surface.toml"))?;
    let s = &tpr.sweep;
    let cells = sweep_tpr_surface(&tpr, &s.change_sizes, &s.counts, &s.seeds)?;
    print!("change\\count");
    for c in &s.counts {
        print!("{c:>6}");
    }
    println!();
    for row in cells.chunks(s.counts.len()) {
        print!("{:>12}", row[0].change_size);
        for cell in row {
            print!("{:>6.2}", cell.tpr);
        }
        println!();
    }
    Ok(())
}
