//! Server and clients over real sockets on the loopback interface, in
//! threads of one process. The CLI's `serve` and `client` do the same across
//! processes.

use std::net::TcpListener;
use std::thread;

use mudpqfed::harness::{prepare, ExperimentConfig};
use mudpqfed::transport::{connect_tcp, serve_tcp, TcpOptions};

fn main() -> mudpqfed::Result<()> {
    let config = ExperimentConfig::new(2, 2, 3);
    let setup = prepare(&config)?;
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let opts = TcpOptions::default();
    let handles: Vec<_> = setup
        .clients(&config)?
        .into_iter()
        .map(|client| {
            let opts = opts.clone();
            thread::spawn(move || connect_tcp(addr, client, &opts))
        })
        .collect();
    let served = serve_tcp(listener, setup.server(&config), &opts)?;
    for h in handles {
        let c = h.join().expect("client thread")?;
        println!(
            "client {} finished after {} globals",
            c.id(),
            c.globals().len()
        );
    }
    for r in served.server.history() {
        println!(
            "round {}: divisor {}, malicious {:?}",
            r.round, r.update.divisor, r.malicious
        );
    }
    println!("{} bytes on the wire", served.counters.total_bytes());
    Ok(())
}
