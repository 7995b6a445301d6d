//! Grid operator service: registration, fee quotes and tuple issuance over
//! TCP, one request frame and one response frame at a time.

use std::io::{BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};

use plem::dso::{Dso, DsoRequest, DsoResponse};
use plem::net::frame::{read_frame, write_frame, SessionId};
use plem::{Error, Result};

const SESSION: SessionId = *b"plem-dso-service";

/// Serves connections one after another; stops after `max_conns` if given.
pub fn serve(listener: &TcpListener, dso: &mut Dso, max_conns: Option<usize>) -> Result<()> {
    for (served, conn) in listener.incoming().enumerate() {
        let s = conn?;
        if let Err(e) = serve_conn(s, dso) {
            eprintln!("dso: connection dropped: {e}");
        }
        if max_conns.is_some_and(|m| served + 1 >= m) {
            break;
        }
    }
    Ok(())
}

fn serve_conn(s: TcpStream, dso: &mut Dso) -> Result<()> {
    let mut r = BufReader::new(s.try_clone()?);
    let mut w = BufWriter::new(s);
    while let Some(f) = read_frame(&mut r)? {
        let resp = match DsoRequest::from_frame(&f) {
            Ok(req) => dso.serve(&req),
            Err(e) => DsoResponse::Error(e.to_string()),
        };
        write_frame(&mut w, &resp.to_frame(SESSION, 0))?;
        w.flush()?;
    }
    Ok(())
}

pub struct DsoClient {
    r: BufReader<TcpStream>,
    w: BufWriter<TcpStream>,
}

impl DsoClient {
    pub fn connect(addr: &str) -> Result<Self> {
        let s = TcpStream::connect(addr).map_err(|e| Error::PeerUnreachable(format!("{addr}: {e}")))?;
        Ok(DsoClient { r: BufReader::new(s.try_clone()?), w: BufWriter::new(s) })
    }

    pub fn call(&mut self, req: &DsoRequest) -> Result<DsoResponse> {
        write_frame(&mut self.w, &req.to_frame(SESSION, 3))?;
        self.w.flush()?;
        let f = read_frame(&mut self.r)?.ok_or_else(|| Error::TransportFailure("grid operator hung up".into()))?;
        DsoResponse::from_frame(&f)
    }
}
