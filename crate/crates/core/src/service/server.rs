use std::collections::VecDeque;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender, TrySendError};
use tungstenite::{Message, WebSocket};

use super::session::Session;
use super::wire::{parse_client_message, ClientMessage, Envelope, EventKind, ServerMessage};
use super::ServiceError;

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// `host:port`; port 0 picks a free one.
    pub addr: String,
    /// Simulation rate. The loop never runs faster than this.
    pub hz: f64,
    /// Messages buffered per viewer before the oldest are dropped.
    pub queue: usize,
    /// Stop after this many frames.
    pub max_frames: Option<u64>,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions { addr: "127.0.0.1:8765".into(), hz: 30.0, queue: 64, max_frames: None }
    }
}

/// Bounded drop-oldest queue of one connection.
#[derive(Debug)]
pub struct ClientQueue {
    inner: Mutex<(VecDeque<ServerMessage>, u64)>,
    cap: usize,
}

impl ClientQueue {
    pub fn new(cap: usize) -> Self {
        ClientQueue { inner: Mutex::new((VecDeque::new(), 0)), cap: cap.max(1) }
    }

    pub fn push(&self, m: ServerMessage) {
        let mut g = self.inner.lock().unwrap();
        if g.0.len() >= self.cap {
            g.0.pop_front();
            g.1 += 1;
        }
        g.0.push_back(m);
    }

    /// Everything queued, numbered from `seq`, behind a gap event if
    /// anything was dropped since the last call.
    pub fn drain(&self, seq: &mut u64, t: u64) -> Vec<Envelope> {
        let (msgs, dropped) = {
            let mut g = self.inner.lock().unwrap();
            let dropped = std::mem::take(&mut g.1);
            (g.0.drain(..).collect::<Vec<_>>(), dropped)
        };
        let gap = (dropped > 0).then(|| ServerMessage::Event {
            t,
            kind: EventKind::Gap,
            from: None,
            to: None,
            score: None,
            count: Some(dropped),
        });
        gap.into_iter()
            .chain(msgs)
            .map(|body| {
                *seq += 1;
                Envelope { seq: *seq - 1, body }
            })
            .collect()
    }
}

struct Client {
    id: u64,
    outbox: Arc<ClientQueue>,
    greeted: bool,
}

#[derive(Default)]
struct Clients {
    list: Vec<Client>,
    driver: Option<u64>,
    next_id: u64,
}

struct Shared {
    clients: Mutex<Clients>,
    stop: AtomicBool,
    frames: AtomicU64,
}

/// A running server. Dropping it stops every thread.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Frames simulated so far.
    pub fn frames(&self) -> u64 {
        self.shared.frames.load(Ordering::Relaxed)
    }

    pub fn is_running(&self) -> bool {
        !self.shared.stop.load(Ordering::Relaxed)
    }

    pub fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Blocks until the frame limit is reached (or forever without one).
    pub fn wait(mut self) {
        while self.is_running() {
            std::thread::sleep(Duration::from_millis(20));
        }
        self.stop();
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds and starts the simulation loop and the acceptor. The first viewer
/// to connect while no driver is present becomes the driver; the rest
/// observe.
pub fn serve(session: Session, opts: ServerOptions) -> Result<ServerHandle, ServiceError> {
    if !(opts.hz > 0.0 && opts.hz.is_finite()) || opts.queue == 0 {
        return Err(ServiceError::Input("server rate and queue length must be positive".into()));
    }
    let listener = TcpListener::bind(&opts.addr).map_err(|e| ServiceError::Io { path: opts.addr.clone(), reason: e.to_string() })?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Io { path: opts.addr.clone(), reason: e.to_string() })?;
    listener
        .set_nonblocking(true)
        .map_err(|e| ServiceError::Io { path: opts.addr.clone(), reason: e.to_string() })?;
    let shared = Arc::new(Shared { clients: Mutex::new(Clients::default()), stop: AtomicBool::new(false), frames: AtomicU64::new(0) });
    let (cmd_tx, cmd_rx) = crossbeam_channel::bounded(256);

    let sim = {
        let shared = shared.clone();
        let opts = opts.clone();
        std::thread::Builder::new()
            .name("sim".into())
            .spawn(move || sim_loop(session, opts, shared, cmd_rx))
            .expect("spawn sim thread")
    };
    let acceptor = {
        let shared = shared.clone();
        std::thread::Builder::new()
            .name("accept".into())
            .spawn(move || accept_loop(listener, opts.queue, shared, cmd_tx))
            .expect("spawn acceptor")
    };
    log::info!("serving on ws://{addr}");
    Ok(ServerHandle { addr, shared, threads: vec![sim, acceptor] })
}

fn sim_loop(mut session: Session, opts: ServerOptions, shared: Arc<Shared>, cmds: Receiver<(u64, ClientMessage)>) {
    let dt = Duration::from_secs_f64(1.0 / opts.hz);
    let mut next = Instant::now();
    while !shared.stop.load(Ordering::Relaxed) {
        while let Ok((id, msg)) = cmds.try_recv() {
            let replies = session.apply(msg);
            let clients = shared.clients.lock().unwrap();
            if let Some(c) = clients.list.iter().find(|c| c.id == id) {
                replies.into_iter().for_each(|m| c.outbox.push(m));
            }
        }
        let out = session.tick();
        {
            let mut clients = shared.clients.lock().unwrap();
            let driver = clients.driver;
            for c in clients.list.iter_mut() {
                if !c.greeted {
                    c.outbox.push(session.hello(driver == Some(c.id)));
                    c.greeted = true;
                }
                for m in &out {
                    c.outbox.push(m.clone());
                }
            }
        }
        let n = shared.frames.fetch_add(1, Ordering::Relaxed) + 1;
        if opts.max_frames.is_some_and(|m| n >= m) {
            break;
        }
        next += dt;
        let now = Instant::now();
        if next > now {
            std::thread::sleep(next - now);
        } else if now - next > dt {
            // behind: keep real time rather than catching up in a burst
            next = now;
        }
    }
    shared.stop.store(true, Ordering::Relaxed);
}

fn accept_loop(listener: TcpListener, queue: usize, shared: Arc<Shared>, cmds: Sender<(u64, ClientMessage)>) {
    let mut handlers: Vec<JoinHandle<()>> = Vec::new();
    while !shared.stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let shared = shared.clone();
                let cmds = cmds.clone();
                let spawned = std::thread::Builder::new()
                    .name(format!("client-{peer}"))
                    .spawn(move || {
                        if let Err(e) = client_loop(stream, queue, &shared, cmds) {
                            log::debug!("client {peer}: {e}");
                        }
                    });
                match spawned {
                    Ok(h) => handlers.push(h),
                    Err(e) => log::warn!("cannot spawn client thread: {e}"),
                }
                handlers.retain(|h| !h.is_finished());
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(Duration::from_millis(50));
            }
        }
    }
    for h in handlers {
        let _ = h.join();
    }
}

fn would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn client_loop(
    stream: TcpStream,
    queue: usize,
    shared: &Shared,
    cmds: Sender<(u64, ClientMessage)>,
) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(2)))?;
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(5)))?;
    ws.get_ref().set_write_timeout(Some(Duration::from_millis(200)))?;

    let outbox = Arc::new(ClientQueue::new(queue));
    let id = {
        let mut c = shared.clients.lock().unwrap();
        let id = c.next_id;
        c.next_id += 1;
        if c.driver.is_none() {
            c.driver = Some(id);
        }
        c.list.push(Client { id, outbox: outbox.clone(), greeted: false });
        id
    };
    let result = serve_client(&mut ws, id, &outbox, shared, &cmds);
    let mut c = shared.clients.lock().unwrap();
    c.list.retain(|c| c.id != id);
    if c.driver == Some(id) {
        c.driver = None;
    }
    drop(c);
    let _ = ws.close(None);
    let _ = ws.flush();
    result
}

fn serve_client(
    ws: &mut WebSocket<TcpStream>,
    id: u64,
    outbox: &ClientQueue,
    shared: &Shared,
    cmds: &Sender<(u64, ClientMessage)>,
) -> Result<(), tungstenite::Error> {
    let mut seq = 0u64;
    let mut blocked = false;
    while !shared.stop.load(Ordering::Relaxed) {
        if blocked {
            // finish the previous write before taking more from the queue
            match ws.flush() {
                Ok(()) => blocked = false,
                Err(e) if would_block(&e) => {}
                Err(e) => return Err(e),
            }
        }
        if !blocked {
            for env in outbox.drain(&mut seq, shared.frames.load(Ordering::Relaxed)) {
                let text = serde_json::to_string(&env).expect("server message serializes");
                match ws.write(Message::text(text)) {
                    Ok(()) => {}
                    Err(e) if would_block(&e) => blocked = true,
                    Err(e) => return Err(e),
                }
            }
            match ws.flush() {
                Ok(()) => {}
                Err(e) if would_block(&e) => blocked = true,
                Err(e) => return Err(e),
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let is_driver = shared.clients.lock().unwrap().driver == Some(id);
                match parse_client_message(text.as_str()) {
                    Err(e) => outbox.push(ServerMessage::error(e)),
                    Ok(_) if !is_driver => outbox.push(ServerMessage::error("only the driving viewer may send commands")),
                    Ok(msg) => match cmds.try_send((id, msg)) {
                        Ok(()) => {}
                        Err(TrySendError::Full(_)) => outbox.push(ServerMessage::error("server busy; command dropped")),
                        Err(TrySendError::Disconnected(_)) => return Ok(()),
                    },
                }
            }
            Ok(Message::Binary(_)) => outbox.push(ServerMessage::error("binary messages are not supported")),
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if would_block(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
