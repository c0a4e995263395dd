//! TCP transport for the [`Coordinator`].
//!
//! One reader thread per connection turns frames into events; a single
//! executor thread owns the coordinator and every write half, so command
//! application and reply ordering never depend on thread scheduling.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::{Coordinator, Reaction, RunReport, SessionId};
use crate::wire::{encode_message, read_frame};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("address {0} is already in use")]
    PortInUse(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: io::Error,
    },
}

enum Event {
    Accepted(TcpStream),
    Frame(SessionId, Vec<u8>),
    Eof(SessionId),
    Failed(SessionId, String),
}

#[derive(Debug)]
pub struct Server {
    listener: TcpListener,
    coordinator: Coordinator,
    connect_timeout: Duration,
}

impl Server {
    /// Binds the listening socket; port 0 picks a free port.
    pub fn bind(
        addr: impl ToSocketAddrs + std::fmt::Display,
        coordinator: Coordinator,
        connect_timeout: Duration,
    ) -> Result<Self, ServerError> {
        let listener = TcpListener::bind(&addr).map_err(|source| {
            if source.kind() == io::ErrorKind::AddrInUse {
                ServerError::PortInUse(addr.to_string())
            } else {
                ServerError::Bind {
                    addr: addr.to_string(),
                    source,
                }
            }
        })?;
        Ok(Self {
            listener,
            coordinator,
            connect_timeout,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener
            .local_addr()
            .expect("bound listener has an address")
    }

    /// Serves clients until the run ends.
    pub fn run(self) -> RunReport {
        let Server {
            listener,
            mut coordinator,
            connect_timeout,
        } = self;
        let (tx, rx) = mpsc::channel::<Event>();
        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = spawn_acceptor(listener, tx.clone(), Arc::clone(&stop));

        let mut writers: BTreeMap<SessionId, TcpStream> = BTreeMap::new();
        let mut readers: Vec<JoinHandle<()>> = Vec::new();
        let started_at = Instant::now();

        while !coordinator.is_finished() {
            let reaction = match rx.recv_timeout(Duration::from_millis(20)) {
                Ok(Event::Accepted(stream)) => {
                    let sid = coordinator.connect();
                    match stream.try_clone() {
                        Ok(read_half) => {
                            readers.push(spawn_reader(sid, read_half, tx.clone()));
                            writers.insert(sid, stream);
                            Reaction::default()
                        }
                        Err(e) => coordinator.connection_error(sid, &e.to_string()),
                    }
                }
                Ok(Event::Frame(sid, frame)) => coordinator.handle_frame(sid, &frame),
                Ok(Event::Eof(sid)) => coordinator.disconnect(sid),
                Ok(Event::Failed(sid, detail)) => coordinator.connection_error(sid, &detail),
                Err(RecvTimeoutError::Timeout) => {
                    if !coordinator.is_started() && started_at.elapsed() >= connect_timeout {
                        let msg = format!(
                            "connect timeout after {:?}: {} of {} clients registered",
                            connect_timeout,
                            coordinator.registered_clients(),
                            coordinator.expected_clients()
                        );
                        coordinator.abort(&msg, None)
                    } else {
                        Reaction::default()
                    }
                }
                Err(RecvTimeoutError::Disconnected) => {
                    coordinator.abort("transport channel closed", None)
                }
            };
            apply(&reaction, &mut writers);
        }

        stop.store(true, Ordering::SeqCst);
        for (_, stream) in std::mem::take(&mut writers) {
            let _ = stream.shutdown(Shutdown::Both);
        }
        drop(tx);
        let _ = acceptor.join();
        // Drain late connections so their reader threads see EOF.
        while let Ok(event) = rx.try_recv() {
            if let Event::Accepted(stream) = event {
                let _ = stream.shutdown(Shutdown::Both);
            }
        }
        for r in readers {
            let _ = r.join();
        }
        coordinator.into_report()
    }
}

fn apply(reaction: &Reaction, writers: &mut BTreeMap<SessionId, TcpStream>) {
    for out in &reaction.outgoing {
        let Some(stream) = writers.get_mut(&out.session) else {
            continue;
        };
        match encode_message(&out.commands) {
            Ok(bytes) => {
                // A failed write surfaces as EOF on the reader side.
                let _ = stream.write_all(&bytes).and_then(|_| stream.flush());
            }
            Err(e) => {
                log_internal(&format!("cannot encode reply: {e}"));
            }
        }
    }
    for sid in &reaction.close {
        if let Some(stream) = writers.remove(sid) {
            let _ = stream.shutdown(Shutdown::Both);
        }
    }
}

fn log_internal(msg: &str) {
    eprintln!("cosim server: {msg}");
}

fn spawn_acceptor(
    listener: TcpListener,
    tx: Sender<Event>,
    stop: Arc<AtomicBool>,
) -> JoinHandle<()> {
    thread::spawn(move || {
        if let Err(e) = listener.set_nonblocking(true) {
            log_internal(&format!("listener: {e}"));
            return;
        }
        while !stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let _ = stream.set_nonblocking(false);
                    let _ = stream.set_nodelay(true);
                    if tx.send(Event::Accepted(stream)).is_err() {
                        return;
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(2));
                }
                Err(e) => {
                    log_internal(&format!("accept: {e}"));
                    thread::sleep(Duration::from_millis(2));
                }
            }
        }
    })
}

fn spawn_reader(sid: SessionId, mut stream: TcpStream, tx: Sender<Event>) -> JoinHandle<()> {
    thread::spawn(move || loop {
        let event = match read_frame(&mut stream) {
            Ok(Some(frame)) => Event::Frame(sid, frame),
            Ok(None) => Event::Eof(sid),
            Err(e) => Event::Failed(sid, e.to_string()),
        };
        let last = !matches!(event, Event::Frame(..));
        if tx.send(event).is_err() || last {
            return;
        }
    })
}
