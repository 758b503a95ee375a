//! Accuracy per round for the shipped attack config: no attack, attack
//! without defense, attack with defense.

use std::path::PathBuf;

use mudpqfed::harness::{run_experiment, Defense, ExperimentConfig};

fn main() -> mudpqfed::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/accuracy.toml");
    let config = ExperimentConfig::load(&path)?;
    let mut curves = Vec::new();
    for (label, defense, baseline) in [
        ("baseline", Defense::On, true),
        ("off", Defense::Off, false),
        ("on", Defense::On, false),
    ] {
        let mut c = config.clone();
        c.defense = defense;
        c.baseline = baseline;
        let out = run_experiment(&c)?;
        println!(
            "{label:>8}: final {:.3}, identified {:?}, tpr {:.2}",
            out.summary.final_accuracy, out.summary.identified, out.summary.tpr
        );
        curves.push(out.metrics);
    }
    println!("round  baseline  off    on");
    for t in 0..config.rounds as usize {
        let mark = if config.attacks[0].rounds.contains(&(t as u32 + 1)) {
            "*"
        } else {
            ""
        };
        println!(
            "{:>4}{mark:1}  {:.3}     {:.3}  {:.3}",
            t + 1,
            curves[0][t].accuracy,
            curves[1][t].accuracy,
            curves[2][t].accuracy
        );
    }
    Ok(())
}
