//! Point-to-point frame delivery between numbered endpoints.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use super::frame::{read_frame, write_frame, Frame};
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(900);

/// Ordered, reliable delivery of frames to and from numbered peers.
pub trait Transport: Send {
    fn send(&mut self, to: usize, frame: &Frame) -> Result<()>;
    fn recv(&mut self, from: usize) -> Result<Frame>;
    /// Number of endpoints including this one.
    fn size(&self) -> usize;
}

/// One captured frame as seen on the wire.
#[derive(Clone, Debug)]
pub struct TapRecord {
    pub from: usize,
    pub to: usize,
    pub bytes: Vec<u8>,
}

struct Envelope {
    deliver_at: Option<Instant>,
    bytes: Vec<u8>,
}

/// In-process transport over channels carrying encoded frames.
pub struct LoopbackTransport {
    me: usize,
    out: Vec<Option<Sender<Envelope>>>,
    inbox: Vec<Option<Receiver<Envelope>>>,
    one_way: Duration,
    timeout: Duration,
    tap: Option<Sender<TapRecord>>,
}

/// Options for a loopback mesh.
#[derive(Clone, Debug, Default)]
pub struct LoopbackOptions {
    /// Emulated round-trip time; every frame is delayed by half of it.
    pub rtt: Duration,
    pub timeout: Option<Duration>,
    pub tap: Option<Sender<TapRecord>>,
}

/// Fully connected loopback mesh of `n` endpoints.
pub fn loopback_mesh(n: usize, opts: LoopbackOptions) -> Vec<LoopbackTransport> {
    let mut senders: Vec<Vec<Option<Sender<Envelope>>>> = (0..n).map(|_| (0..n).map(|_| None).collect()).collect();
    let mut receivers: Vec<Vec<Option<Receiver<Envelope>>>> = (0..n).map(|_| (0..n).map(|_| None).collect()).collect();
    for a in 0..n {
        for b in 0..n {
            if a != b {
                let (tx, rx) = unbounded();
                senders[a][b] = Some(tx);
                receivers[b][a] = Some(rx);
            }
        }
    }
    senders
        .into_iter()
        .zip(receivers)
        .enumerate()
        .map(|(me, (out, inbox))| LoopbackTransport {
            me,
            out,
            inbox,
            one_way: opts.rtt / 2,
            timeout: opts.timeout.unwrap_or(DEFAULT_TIMEOUT),
            tap: opts.tap.clone(),
        })
        .collect()
}

impl Transport for LoopbackTransport {
    fn send(&mut self, to: usize, frame: &Frame) -> Result<()> {
        let bytes = frame.encode();
        if let Some(tap) = &self.tap {
            let _ = tap.send(TapRecord { from: self.me, to, bytes: bytes.clone() });
        }
        let deliver_at = (!self.one_way.is_zero()).then(|| Instant::now() + self.one_way);
        self.out
            .get(to)
            .and_then(|s| s.as_ref())
            .ok_or_else(|| Error::TransportFailure(format!("no link {} -> {to}", self.me)))?
            .send(Envelope { deliver_at, bytes })
            .map_err(|_| Error::TransportFailure(format!("peer {to} hung up")))
    }

    fn recv(&mut self, from: usize) -> Result<Frame> {
        let rx = self
            .inbox
            .get(from)
            .and_then(|r| r.as_ref())
            .ok_or_else(|| Error::TransportFailure(format!("no link {from} -> {}", self.me)))?;
        let env = rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => Error::Timeout(format!("receive from {from}")),
            RecvTimeoutError::Disconnected => Error::TransportFailure(format!("peer {from} hung up")),
        })?;
        if let Some(t) = env.deliver_at {
            let now = Instant::now();
            if t > now {
                thread::sleep(t - now);
            }
        }
        Frame::decode(&env.bytes)
    }

    fn size(&self) -> usize {
        self.out.len()
    }
}

/// TCP transport with one reader thread per peer connection.
pub struct TcpTransport {
    writers: Vec<Option<BufWriter<TcpStream>>>,
    inbox: Vec<Option<Receiver<Result<Frame>>>>,
    timeout: Duration,
}

impl TcpTransport {
    /// Connects endpoint `me` to every other endpoint in `addrs`.
    ///
    /// Lower-numbered endpoints accept, higher-numbered ones dial, so each pair
    /// shares one stream. `addrs[me]` is the local listen address.
    pub fn establish(me: usize, addrs: &[String], timeout: Duration) -> Result<Self> {
        let n = addrs.len();
        let mut streams: Vec<Option<TcpStream>> = (0..n).map(|_| None).collect();
        let need_accept = (me + 1..n).count();
        let listener = if need_accept > 0 {
            Some(TcpListener::bind(&addrs[me]).map_err(|e| Error::PeerUnreachable(format!("bind {}: {e}", addrs[me])))?)
        } else {
            None
        };
        for (j, addr) in addrs.iter().enumerate().take(me) {
            let mut s = dial(addr, timeout)?;
            s.write_all(&[me as u8])?;
            streams[j] = Some(s);
        }
        if let Some(l) = listener {
            for _ in 0..need_accept {
                let (mut s, _) = l.accept()?;
                let mut who = [0u8; 1];
                s.read_exact(&mut who)?;
                let j = who[0] as usize;
                if j <= me || j >= n || streams[j].is_some() {
                    return Err(Error::TransportFailure(format!("unexpected handshake from {j}")));
                }
                streams[j] = Some(s);
            }
        }
        Self::from_streams(streams, timeout)
    }

    /// Wraps already connected streams; entry `j` talks to endpoint `j`.
    pub fn from_streams(streams: Vec<Option<TcpStream>>, timeout: Duration) -> Result<Self> {
        let mut writers = Vec::new();
        let mut inbox = Vec::new();
        for s in streams {
            match s {
                Some(s) => {
                    s.set_nodelay(true)?;
                    let r = s.try_clone()?;
                    let (tx, rx) = unbounded();
                    thread::spawn(move || reader_loop(r, tx));
                    writers.push(Some(BufWriter::new(s)));
                    inbox.push(Some(rx));
                }
                None => {
                    writers.push(None);
                    inbox.push(None);
                }
            }
        }
        Ok(TcpTransport { writers, inbox, timeout })
    }
}

fn dial(addr: &str, timeout: Duration) -> Result<TcpStream> {
    let deadline = Instant::now() + timeout;
    loop {
        let target = addr
            .to_socket_addrs()
            .map_err(|e| Error::PeerUnreachable(format!("{addr}: {e}")))?
            .next()
            .ok_or_else(|| Error::PeerUnreachable(addr.to_string()))?;
        match TcpStream::connect(target) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => return Err(Error::PeerUnreachable(format!("{addr}: {e}"))),
            Err(_) => thread::sleep(Duration::from_millis(50)),
        }
    }
}

fn reader_loop(s: TcpStream, tx: Sender<Result<Frame>>) {
    let mut r = BufReader::new(s);
    loop {
        match read_frame(&mut r) {
            Ok(Some(f)) => {
                if tx.send(Ok(f)).is_err() {
                    return;
                }
            }
            Ok(None) => return,
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        }
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, to: usize, frame: &Frame) -> Result<()> {
        let w = self
            .writers
            .get_mut(to)
            .and_then(|w| w.as_mut())
            .ok_or_else(|| Error::TransportFailure(format!("no connection to {to}")))?;
        write_frame(w, frame).map_err(|e| Error::TransportFailure(format!("send to {to}: {e}")))
    }

    fn recv(&mut self, from: usize) -> Result<Frame> {
        let rx = self
            .inbox
            .get(from)
            .and_then(|r| r.as_ref())
            .ok_or_else(|| Error::TransportFailure(format!("no connection from {from}")))?;
        match rx.recv_timeout(self.timeout) {
            Ok(r) => r,
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(format!("receive from {from}"))),
            Err(RecvTimeoutError::Disconnected) => Err(Error::TransportFailure(format!("peer {from} closed"))),
        }
    }

    fn size(&self) -> usize {
        self.writers.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::frame::PayloadKind;

    #[test]
    fn loopback_fifo_and_tap() {
        let (tx, rx) = unbounded();
        let mut mesh = loopback_mesh(3, LoopbackOptions { tap: Some(tx), ..Default::default() });
        let f1 = Frame::new([1; 16], 1, 0, PayloadKind::Field, vec![1]);
        let f2 = Frame::new([1; 16], 2, 0, PayloadKind::Field, vec![2]);
        mesh[0].send(2, &f1).unwrap();
        mesh[0].send(2, &f2).unwrap();
        assert_eq!(mesh[2].recv(0).unwrap(), f1);
        assert_eq!(mesh[2].recv(0).unwrap(), f2);
        assert_eq!(rx.try_iter().count(), 2);
    }

    #[test]
    fn loopback_latency_delays_delivery() {
        let mut mesh = loopback_mesh(2, LoopbackOptions { rtt: Duration::from_millis(40), ..Default::default() });
        let t = Instant::now();
        mesh[0].send(1, &Frame::new([0; 16], 0, 0, PayloadKind::Control, vec![])).unwrap();
        mesh[1].recv(0).unwrap();
        assert!(t.elapsed() >= Duration::from_millis(20));
    }

    #[test]
    fn loopback_timeout() {
        let mut mesh = loopback_mesh(2, LoopbackOptions { timeout: Some(Duration::from_millis(10)), ..Default::default() });
        assert!(matches!(mesh[1].recv(0), Err(Error::Timeout(_))));
    }

    #[test]
    fn tcp_mesh_exchanges_frames() {
        let ports: Vec<String> = (0..3)
            .map(|_| {
                let l = TcpListener::bind("127.0.0.1:0").unwrap();
                l.local_addr().unwrap().to_string()
            })
            .collect();
        let handles: Vec<_> = (0..3)
            .map(|me| {
                let addrs = ports.clone();
                thread::spawn(move || {
                    let mut t = TcpTransport::establish(me, &addrs, Duration::from_secs(10)).unwrap();
                    for j in 0..3 {
                        if j != me {
                            t.send(j, &Frame::new([0; 16], me as u32, me as u8, PayloadKind::Control, vec![me as u8])).unwrap();
                        }
                    }
                    let mut got = vec![];
                    for j in 0..3 {
                        if j != me {
                            got.push(t.recv(j).unwrap().payload[0]);
                        }
                    }
                    got
                })
            })
            .collect();
        let res: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(res[0], vec![1, 2]);
        assert_eq!(res[1], vec![0, 2]);
        assert_eq!(res[2], vec![0, 1]);
    }
}
