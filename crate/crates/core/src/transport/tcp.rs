//! Blocking TCP transport. One connection per client; each connection gets a
//! reader thread feeding a channel, and the protocol core runs on the calling
//! thread so server state has a single writer.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::wire;
use super::ByteCounters;
use crate::error::{Error, Result};
use crate::group::GroupParams;
use crate::hypermesh::ClientId;
use crate::protocol::{ClientState, Message, Outbound, ServerPhase, ServerState, SERVER_ID};

#[derive(Clone, Debug)]
pub struct TcpOptions {
    /// Silence longer than this ends the current stage: the server times out
    /// stragglers, a waiting client gives up after four stages.
    pub stage_timeout: Duration,
    /// How long a client keeps retrying the initial connect.
    pub connect_timeout: Duration,
    /// Test hook: the client disconnects once it reaches this round.
    pub disconnect_at_round: Option<u32>,
}

impl Default for TcpOptions {
    fn default() -> Self {
        Self {
            stage_timeout: Duration::from_secs(30),
            connect_timeout: Duration::from_secs(30),
            disconnect_at_round: None,
        }
    }
}

#[derive(Debug)]
pub struct TcpServerOutcome {
    pub server: ServerState,
    pub counters: ByteCounters,
}

enum Event {
    Connected(u64, TcpStream),
    Frame(u64, Vec<u8>),
    Closed(u64, String),
}

struct Connections {
    streams: BTreeMap<u64, TcpStream>,
    client_of: BTreeMap<u64, ClientId>,
    conn_of: BTreeMap<ClientId, u64>,
    counters: ByteCounters,
}

impl Connections {
    fn close(&mut self, conn: u64) -> Option<ClientId> {
        if let Some(s) = self.streams.remove(&conn) {
            let _ = s.shutdown(Shutdown::Both);
        }
        let client = self.client_of.remove(&conn)?;
        self.conn_of.remove(&client);
        Some(client)
    }

    fn write(&mut self, client: ClientId, msg: &Message, params: &GroupParams) -> Option<ClientId> {
        let conn = *self.conn_of.get(&client)?;
        let bytes = wire::encode(msg, SERVER_ID, params);
        let stream = self.streams.get_mut(&conn)?;
        match stream.write_all(&bytes) {
            Ok(()) => {
                self.counters.record(msg.round(), msg.kind(), bytes.len());
                None
            }
            Err(e) => {
                warn!("write to client {client} failed: {e}");
                self.close(conn)
            }
        }
    }

    /// Sends everything; returns clients whose connection broke on the way.
    fn route(
        &mut self,
        outs: Vec<Outbound>,
        clients: usize,
        params: &GroupParams,
    ) -> Vec<ClientId> {
        let mut broken = Vec::new();
        for o in outs {
            match o {
                Outbound::To(c, m) => broken.extend(self.write(c, &m, params)),
                Outbound::Broadcast(m) => {
                    for c in 0..clients {
                        broken.extend(self.write(c, &m, params));
                    }
                }
            }
        }
        broken
    }
}

fn spawn_reader(conn: u64, stream: TcpStream, tx: mpsc::Sender<Event>) {
    thread::spawn(move || {
        let mut stream = stream;
        loop {
            match wire::read_frame(&mut stream) {
                Ok(Some(frame)) => {
                    if tx.send(Event::Frame(conn, frame)).is_err() {
                        return;
                    }
                }
                Ok(None) => {
                    let _ = tx.send(Event::Closed(conn, "end of stream".into()));
                    return;
                }
                Err(e) => {
                    let _ = tx.send(Event::Closed(conn, e.to_string()));
                    return;
                }
            }
        }
    });
}

/// Runs the server to completion on an already bound listener.
pub fn serve_tcp(
    listener: TcpListener,
    mut server: ServerState,
    options: &TcpOptions,
) -> Result<TcpServerOutcome> {
    let params = server.config().params.clone();
    let n = server.config().topology.client_count();
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();
    let acceptor = {
        let stop = Arc::clone(&stop);
        let tx = tx.clone();
        thread::spawn(move || {
            let mut next = 0u64;
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    return;
                }
                let Ok(stream) = stream else { continue };
                let _ = stream.set_nodelay(true);
                let Ok(reader) = stream.try_clone() else {
                    continue;
                };
                if tx.send(Event::Connected(next, stream)).is_err() {
                    return;
                }
                spawn_reader(next, reader, tx.clone());
                next += 1;
            }
        })
    };
    drop(tx);

    let mut conns = Connections {
        streams: BTreeMap::new(),
        client_of: BTreeMap::new(),
        conn_of: BTreeMap::new(),
        counters: ByteCounters::default(),
    };
    let mut pending_drops: Vec<ClientId> = Vec::new();
    let result = loop {
        if server.is_finished() {
            break Ok(());
        }
        while let Some(c) = pending_drops.pop() {
            let outs = server.disconnect(c)?;
            pending_drops.extend(conns.route(outs, n, &params));
        }
        if server.is_finished() {
            break Ok(());
        }
        let event = match rx.recv_timeout(options.stage_timeout) {
            Ok(e) => e,
            Err(RecvTimeoutError::Timeout) => {
                if server.phase() == ServerPhase::Registration {
                    break Err(Error::Protocol(format!(
                        "registration timed out with {} of {n} clients",
                        server.registered()
                    )));
                }
                info!("stage timeout in {:?}", server.phase());
                let outs = server.on_timeout()?;
                pending_drops.extend(conns.route(outs, n, &params));
                continue;
            }
            Err(RecvTimeoutError::Disconnected) => {
                break Err(Error::Protocol("acceptor stopped".into()))
            }
        };
        match event {
            Event::Connected(conn, stream) => {
                debug!("connection {conn} from {:?}", stream.peer_addr().ok());
                conns.streams.insert(conn, stream);
            }
            Event::Closed(conn, why) => {
                if let Some(c) = conns.close(conn) {
                    warn!("client {c} disconnected: {why}");
                    pending_drops.push(c);
                }
            }
            Event::Frame(conn, bytes) => {
                let decoded = wire::decode(&bytes, &params);
                let mapped = conns.client_of.get(&conn).copied();
                let (sender, msg) = match decoded {
                    Ok(v) => v,
                    Err(e) => {
                        warn!("malformed frame on connection {conn}: {e}");
                        pending_drops.extend(conns.close(conn));
                        continue;
                    }
                };
                let client = match (mapped, &msg) {
                    (Some(c), _) if c as u32 == sender => c,
                    (None, Message::Register { .. })
                        if (sender as usize) < n
                            && !conns.conn_of.contains_key(&(sender as usize)) =>
                    {
                        let c = sender as usize;
                        conns.client_of.insert(conn, c);
                        conns.conn_of.insert(c, conn);
                        c
                    }
                    _ => {
                        warn!("connection {conn} sent {:?} as {sender}", msg.kind());
                        pending_drops.extend(conns.close(conn));
                        continue;
                    }
                };
                conns.counters.record(msg.round(), msg.kind(), bytes.len());
                match server.handle(client, msg) {
                    Ok(outs) => pending_drops.extend(conns.route(outs, n, &params)),
                    Err(e) => {
                        warn!("client {client} violated the protocol: {e}");
                        pending_drops.extend(conns.close(conn));
                    }
                }
            }
        }
    };
    // Closing our write halves lets clients see end of stream after the last frame.
    for (_, s) in std::mem::take(&mut conns.streams) {
        let _ = s.shutdown(Shutdown::Write);
    }
    stop.store(true, Ordering::SeqCst);
    let _ = TcpStream::connect(local);
    let _ = acceptor.join();
    result.map(|()| TcpServerOutcome {
        server,
        counters: conns.counters,
    })
}

fn connect_with_retry(addr: SocketAddr, timeout: Duration) -> Result<TcpStream> {
    let deadline = Instant::now() + timeout;
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() < deadline => {
                debug!("connect to {addr} failed ({e}); retrying");
                thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Runs one client until it finishes; returns its final state.
pub fn connect_tcp(
    addr: SocketAddr,
    mut client: ClientState,
    options: &TcpOptions,
) -> Result<ClientState> {
    let mut stream = connect_with_retry(addr, options.connect_timeout)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(options.stage_timeout * 4))?;
    let params = client.params().clone();
    let id = client.id() as u32;
    for m in client.start() {
        stream.write_all(&wire::encode(&m, id, &params))?;
    }
    loop {
        if client.is_finished() {
            return Ok(client);
        }
        let Some(frame) = wire::read_frame(&mut stream)? else {
            return Err(Error::Protocol(format!(
                "server closed the connection in round {}",
                client.round()
            )));
        };
        let (sender, msg) = wire::decode(&frame, &params)?;
        if sender != SERVER_ID {
            return Err(Error::Protocol(format!(
                "frame from {sender} instead of the server"
            )));
        }
        let outs = client.handle(msg)?;
        if options
            .disconnect_at_round
            .is_some_and(|r| client.round() >= r && !client.is_finished())
        {
            info!("client {id} disconnecting at round {}", client.round());
            let _ = stream.shutdown(Shutdown::Both);
            return Ok(client);
        }
        for m in outs {
            stream.write_all(&wire::encode(&m, id, &params))?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypermesh::HypermeshTopology;
    use crate::protocol::{ClientConfig, FixedUpdates, ServerConfig};
    use crate::quantfl::Codebook;
    use crate::transport::sim::{run_simulation, SimSchedule};

    fn build(rounds: u32) -> (ServerState, Vec<ClientState>) {
        let topology = Arc::new(HypermeshTopology::build(2, 2).unwrap());
        let params = GroupParams::test();
        let server = ServerState::new(ServerConfig {
            topology: Arc::clone(&topology),
            params: params.clone(),
            codebook: Codebook::Ternary,
            rounds,
            parameter_count: 2,
            defense: true,
            report_leakage: false,
        });
        let clients = topology
            .clients()
            .map(|c| {
                ClientState::new(
                    ClientConfig {
                        id: c,
                        topology: Arc::clone(&topology),
                        params: params.clone(),
                        rounds,
                        protocol_seed: 3,
                        attack_seed: 4,
                        attacks: vec![],
                    },
                    Box::new(FixedUpdates::new(vec![c as i64 % 2, -1], Codebook::Ternary)),
                )
                .unwrap()
            })
            .collect();
        (server, clients)
    }

    fn run_tcp(
        rounds: u32,
        options: TcpOptions,
        faults: &[(ClientId, TcpOptions)],
    ) -> TcpServerOutcome {
        let (server, clients) = build(rounds);
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handles: Vec<_> = clients
            .into_iter()
            .rev()
            .map(|c| {
                let opts = faults
                    .iter()
                    .find(|(id, _)| *id == c.id())
                    .map(|(_, o)| o.clone())
                    .unwrap_or_else(|| options.clone());
                thread::spawn(move || connect_tcp(addr, c, &opts))
            })
            .collect();
        let out = serve_tcp(listener, server, &options).unwrap();
        for h in handles {
            let _ = h.join().unwrap();
        }
        out
    }

    fn fast() -> TcpOptions {
        TcpOptions {
            stage_timeout: Duration::from_millis(500),
            ..TcpOptions::default()
        }
    }

    #[test]
    fn tcp_matches_simulation() {
        let tcp = run_tcp(3, fast(), &[]);
        let (s, c) = build(3);
        let sim = run_simulation(&SimSchedule::default(), s, c).unwrap();
        assert_eq!(tcp.server.history(), sim.server.history());
        assert_eq!(tcp.counters, sim.transcript.counters());
    }

    #[test]
    fn disconnect_mid_run_excludes_groups() {
        let fault = TcpOptions {
            disconnect_at_round: Some(2),
            ..fast()
        };
        let out = run_tcp(3, fast(), &[(1, fault)]);
        let h = out.server.history();
        assert!(h[0].dropped.is_empty());
        assert!(h[1].dropped.contains(&1));
        assert_eq!(h[1].aggregate.surviving.len(), 2);
        assert_eq!(h.len(), 3);
    }

    #[test]
    fn malformed_frame_drops_the_peer() {
        let (server, clients) = build(1);
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handles: Vec<_> = clients
            .into_iter()
            .filter(|c| c.id() != 2)
            .map(|c| thread::spawn(move || connect_tcp(addr, c, &fast())))
            .collect();
        let rogue = thread::spawn(move || {
            let mut s = connect_with_retry(addr, Duration::from_secs(5)).unwrap();
            let (_, mut cs) = build(1);
            let reg = cs[2].start().remove(0);
            s.write_all(&wire::encode(&reg, 2, &GroupParams::test()))
                .unwrap();
            // Wait for the topology, then send garbage with a bad version byte.
            let _ = wire::read_frame(&mut s);
            s.write_all(&[9u8; 18]).unwrap();
            let _ = wire::read_frame(&mut s);
        });
        let out = serve_tcp(listener, server, &fast()).unwrap();
        rogue.join().unwrap();
        for h in handles {
            h.join().unwrap().unwrap();
        }
        assert_eq!(out.server.history()[0].dropped, [2].into());
        assert_eq!(out.server.history()[0].aggregate.surviving.len(), 2);
    }
}
