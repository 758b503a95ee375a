//! Groups, identifiers and neighbors of a 4^2 hypermesh.

use mudpqfed::HypermeshTopology;

fn main() -> mudpqfed::Result<()> {
    let topo = HypermeshTopology::build(4, 2)?;
    println!(
        "{} clients in {} groups of {}",
        topo.client_count(),
        topo.group_count(),
        topo.d()
    );
    for g in topo.group_ids() {
        println!("  {:>4}  {:?}", topo.group_label(g)?, topo.members_of(g)?);
    }
    for c in [0, 5] {
        let labels: Vec<String> = topo
            .groups_of(c)?
            .iter()
            .map(|&g| topo.group_label(g).unwrap())
            .collect();
        println!(
            "client {c}: digits {:?}, groups {labels:?}, neighbors {:?}",
            topo.identifier(c)?.digits(),
            topo.neighbors_of(c)?
        );
    }
    println!(
        "clients 0 and 5 share a group: {:?}",
        topo.shared_group(0, 5)?
    );
    Ok(())
}
