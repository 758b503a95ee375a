//! Detection-rate sweeps: attacker placements over hypermesh shapes, and a
//! TPR grid over change size and tampered-coordinate count.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{Defense, ExperimentConfig, PlacementSpec, TransportKind};
use super::runner::{prepare, run_experiment};
use crate::adversary::{AttackSpec, CoordinateWindow, Strategy};
use crate::error::{Error, Result};
use crate::hypermesh::{ClientId, HypermeshTopology};

/// Parameter count of the reference MLP and the size of the layer it attacks.
const REFERENCE_PARAMETERS: usize = 24_330;
const REFERENCE_WINDOW: usize = 600;

/// The reference window scaled to a model with `parameters` coordinates.
pub fn scaled_window(parameters: usize) -> usize {
    let scaled = (REFERENCE_WINDOW as f64 * parameters as f64 / REFERENCE_PARAMETERS as f64).round()
        as usize;
    scaled.clamp(1, parameters.max(1))
}

/// Canonical attacker ids. Same-group placements take consecutive ids, so
/// the first `min(attackers, d)` share a group. Otherwise attackers sit on
/// the main diagonal, or are picked greedily so that no two are neighbors.
pub fn place_attackers(
    topology: &HypermeshTopology,
    attackers: usize,
    same_group: bool,
) -> Result<Vec<ClientId>> {
    let n_c = topology.client_count();
    if attackers == 0 || attackers >= n_c {
        return Err(Error::Config(format!(
            "cannot place {attackers} attackers among {n_c} clients"
        )));
    }
    if same_group {
        return Ok((0..attackers).collect());
    }
    let d = topology.d();
    if attackers <= d {
        let step = (n_c - 1) / (d - 1);
        return Ok((0..attackers).map(|i| i * step).collect());
    }
    let mut chosen: Vec<ClientId> = Vec::new();
    for c in topology.clients() {
        if chosen.len() == attackers {
            break;
        }
        if chosen
            .iter()
            .all(|&a| !topology.are_neighbors(a, c).unwrap_or(true))
        {
            chosen.push(c);
        }
    }
    if chosen.len() < attackers {
        return Err(Error::Config(format!(
            "no placement of {attackers} pairwise non-neighbors in {d}^{}",
            topology.n()
        )));
    }
    Ok(chosen)
}

/// The d^2 and d^3 rows of the reference detection tables.
pub fn table_placements() -> Vec<PlacementSpec> {
    let row = |d, n, attackers, same_group| PlacementSpec {
        d,
        n,
        attackers,
        same_group,
        clients: None,
    };
    let mut rows = vec![row(2, 2, 1, true)];
    for d in [3, 4, 5, 8] {
        rows.extend([row(d, 2, 1, true), row(d, 2, 2, true), row(d, 2, 2, false)]);
    }
    for d in [2, 3, 4] {
        rows.push(row(d, 3, 1, true));
        for a in [2, 3] {
            rows.extend([row(d, 3, a, true), row(d, 3, a, false)]);
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub clients: usize,
    pub d: usize,
    pub n: usize,
    pub attackers: usize,
    pub same_group: bool,
    pub placement: Vec<ClientId>,
    pub identified: BTreeSet<ClientId>,
    pub tpr: f64,
    pub fpr: f64,
}

impl DetectionRow {
    pub fn tpr_percent(&self) -> String {
        format!("{:.2}", self.tpr * 100.0)
    }

    pub fn fpr_percent(&self) -> String {
        format!("{:.2}", self.fpr * 100.0)
    }
}

/// `template` supplies the workload; each placement overrides the shape and
/// the attack. Every run lasts through `sweep.attack_round` with the defense on.
pub fn sweep_detection(
    template: &ExperimentConfig,
    placements: &[PlacementSpec],
) -> Result<Vec<DetectionRow>> {
    let mut rows = Vec::with_capacity(placements.len());
    for p in placements {
        let topology = HypermeshTopology::build(p.d, p.n)?;
        let placement = match &p.clients {
            Some(ids) => ids.clone(),
            None => place_attackers(&topology, p.attackers, p.same_group)?,
        };
        let mut cfg = template.clone();
        cfg.d = p.d;
        cfg.n = p.n;
        cfg.defense = Defense::On;
        cfg.baseline = false;
        cfg.transport = TransportKind::Sim;
        cfg.rounds = template.sweep.attack_round;
        cfg.attacks.clear();
        let parameters = prepare(&cfg)?.parameter_count();
        let offset = template.sweep.window_offset.min(parameters - 1);
        cfg.attacks = vec![AttackSpec {
            strategy: Strategy::OutOfRangeAdd,
            clients: placement.clone(),
            rounds: vec![template.sweep.attack_round],
            window: CoordinateWindow {
                offset,
                count: scaled_window(parameters).min(parameters - offset),
            },
            magnitude: template.sweep.magnitude,
        }];
        let out = run_experiment(&cfg)?;
        info!(
            "{}^{} attackers {:?}: identified {:?}",
            p.d, p.n, placement, out.summary.identified
        );
        rows.push(DetectionRow {
            clients: topology.client_count(),
            d: p.d,
            n: p.n,
            attackers: placement.len(),
            same_group: p.same_group,
            placement,
            identified: out.summary.identified,
            tpr: out.summary.tpr,
            fpr: out.summary.fpr,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TprCell {
    pub change_size: i64,
    pub count: usize,
    /// Mean over seeds.
    pub tpr: f64,
    pub runs: usize,
}

/// One attacker on the template's shape adds exactly `change_size` to `count`
/// coordinates at `sweep.attack_round`. Runs end at that round, so every cell
/// of a seed shares the same honest history.
pub fn sweep_tpr_surface(
    template: &ExperimentConfig,
    change_sizes: &[i64],
    counts: &[usize],
    seeds: &[u64],
) -> Result<Vec<TprCell>> {
    if seeds.is_empty() {
        return Err(Error::Config("TPR sweep needs at least one seed".into()));
    }
    let mut cells = Vec::new();
    for &change in change_sizes {
        for &count in counts {
            let mut hits = 0.0;
            for &seed in seeds {
                let mut cfg = template.clone();
                cfg.seeds.data = seed;
                cfg.seeds.protocol = seed;
                cfg.seeds.attack = seed;
                cfg.defense = Defense::On;
                cfg.baseline = false;
                cfg.transport = TransportKind::Sim;
                cfg.rounds = template.sweep.attack_round;
                cfg.attacks = vec![AttackSpec {
                    strategy: Strategy::OutOfRangeAdd,
                    clients: vec![template.sweep.attacker],
                    rounds: vec![template.sweep.attack_round],
                    window: CoordinateWindow {
                        offset: template.sweep.window_offset,
                        count,
                    },
                    magnitude: [change, change],
                }];
                hits += run_experiment(&cfg)?.summary.tpr;
            }
            info!(
                "change {change} count {count}: tpr {}",
                hits / seeds.len() as f64
            );
            cells.push(TprCell {
                change_size: change,
                count,
                tpr: hits / seeds.len() as f64,
                runs: seeds.len(),
            });
        }
    }
    Ok(cells)
}

/// True when TPR never decreases as either axis grows.
pub fn is_monotone(cells: &[TprCell]) -> bool {
    cells.iter().all(|a| {
        cells.iter().all(|b| {
            let dominated = b.change_size >= a.change_size && b.count >= a.count;
            !dominated || b.tpr >= a.tpr
        })
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(File::create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut json = File::create(path)?;
    serde_json::to_writer_pretty(&mut json, rows)?;
    json.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct DetectionCsv<'a> {
    clients: usize,
    d: usize,
    n: usize,
    attackers: usize,
    same_group: bool,
    placement: String,
    identified: String,
    tpr_percent: &'a str,
    fpr_percent: &'a str,
}

pub const DETECTION_HEADER: [&str; 9] = [
    "clients",
    "d",
    "n",
    "attackers",
    "same_group",
    "placement",
    "identified",
    "tpr_percent",
    "fpr_percent",
];

pub const TPR_HEADER: [&str; 4] = ["change_size", "count", "tpr", "runs"];

/// `detection.csv` and `detection.json`.
pub fn write_detection(dir: &Path, rows: &[DetectionRow]) -> Result<()> {
    let join = |ids: &mut dyn Iterator<Item = &ClientId>| {
        ids.map(ToString::to_string).collect::<Vec<_>>().join(";")
    };
    let tprs: Vec<String> = rows.iter().map(DetectionRow::tpr_percent).collect();
    let fprs: Vec<String> = rows.iter().map(DetectionRow::fpr_percent).collect();
    let csv_rows: Vec<DetectionCsv> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| DetectionCsv {
            clients: r.clients,
            d: r.d,
            n: r.n,
            attackers: r.attackers,
            same_group: r.same_group,
            placement: join(&mut r.placement.iter()),
            identified: join(&mut r.identified.iter()),
            tpr_percent: &tprs[i],
            fpr_percent: &fprs[i],
        })
        .collect();
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("detection.csv"), &csv_rows, &DETECTION_HEADER)?;
    // The JSON keeps the unrounded rates.
    write_json(&dir.join("detection.json"), rows)
}

/// `tpr_surface.csv` and `tpr_surface.json`.
pub fn write_tpr_surface(dir: &Path, cells: &[TprCell]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("tpr_surface.csv"), cells, &TPR_HEADER)?;
    write_json(&dir.join("tpr_surface.json"), cells)
}
