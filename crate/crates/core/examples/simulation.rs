//! Deterministic in-memory run with fixed client updates, shuffled delivery,
//! one attacker and one crash.

use std::sync::Arc;

use mudpqfed::adversary::{AttackSpec, CoordinateWindow, Strategy};
use mudpqfed::protocol::{ClientConfig, ClientState, FixedUpdates, ServerConfig, ServerState};
use mudpqfed::quantfl::Codebook;
use mudpqfed::transport::{run_simulation, CrashFault, DeliveryOrder, SimSchedule};
use mudpqfed::{GroupParams, HypermeshTopology};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let topology = Arc::new(HypermeshTopology::build(3, 2)?);
    let params = GroupParams::test();
    let rounds = 3;
    let len = 5;
    let attack = AttackSpec {
        strategy: Strategy::OutOfRangeAdd,
        clients: vec![4],
        rounds: vec![2],
        window: CoordinateWindow {
            offset: 0,
            count: 2,
        },
        magnitude: [20, 30],
    };
    let server = ServerState::new(ServerConfig {
        topology: topology.clone(),
        params: params.clone(),
        codebook: Codebook::Ternary,
        rounds,
        parameter_count: len,
        defense: true,
        report_leakage: false,
    });
    let clients = topology
        .clients()
        .map(|id| {
            let codes = (0..len).map(|k| ((id + k) % 3) as i64 - 1).collect();
            ClientState::new(
                ClientConfig {
                    id,
                    topology: topology.clone(),
                    params: params.clone(),
                    rounds,
                    protocol_seed: 11,
                    attack_seed: 12,
                    attacks: vec![attack.clone()],
                },
                Box::new(FixedUpdates::new(codes, Codebook::Ternary)),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let schedule = SimSchedule {
        seed: 5,
        delay_min: 1,
        delay_max: 4,
        order: DeliveryOrder::SeededShuffle,
        crashes: vec![CrashFault {
            client: 8,
            round: 3,
        }],
    };
    let out = run_simulation(&schedule, server, clients).map_err(|e| e.to_string())?;
    for r in out.server.history() {
        println!(
            "round {}: flagged {:?}, malicious {:?}, dropped {:?}, surviving {:?}, mean codes {:?}",
            r.round,
            r.suspicious.pairs(),
            r.malicious,
            r.dropped,
            r.aggregate.surviving,
            r.update.mean_codes()
        );
    }
    let log = out.transcript.to_log();
    println!(
        "{} transcript lines; first: {}",
        log.lines().count(),
        log.lines().next().unwrap_or("")
    );
    Ok(())
}
