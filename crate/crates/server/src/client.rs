//! Minimal blocking client, used by tests and the command line.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;
use thiserror::Error;

use crate::protocol::*;
use crate::sync::TimeSample;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("timed out waiting for {0}")]
    Timeout(String),
    #[error("server error {}: {}", .0.code, .0.message)]
    Server(ErrorPayload),
    #[error("connection closed")]
    Closed,
}

pub fn wall_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub struct Client {
    stream: TcpStream,
    decoder: FrameDecoder,
    pending: std::collections::VecDeque<WireMessage>,
    pub welcome: WelcomePayload,
}

impl Client {
    /// Connects and waits for WELCOME.
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut c = Client {
            stream,
            decoder: FrameDecoder::new(),
            pending: Default::default(),
            welcome: WelcomePayload {
                protocol: 0,
                dt: 0.0,
                sim_rate: 0.0,
                state_broadcast_rate: 0.0,
                realtime_factor: 0.0,
                articulations: vec![],
                bodies: vec![],
            },
        };
        let w = c.recv_type(MessageType::Welcome, timeout)?;
        c.welcome = w.parse_payload()?;
        Ok(c)
    }

    pub fn send(&mut self, msg: &WireMessage) -> Result<(), ClientError> {
        self.send_raw(&encode_frame(msg)?)
    }

    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<(), ClientError> {
        self.stream.write_all(bytes)?;
        Ok(())
    }

    /// Next frame from the connection.
    pub fn recv(&mut self, timeout: Duration) -> Result<WireMessage, ClientError> {
        if let Some(m) = self.pending.pop_front() {
            return Ok(m);
        }
        let deadline = Instant::now() + timeout;
        let mut buf = [0u8; 64 * 1024];
        loop {
            if let Some(r) = self.decoder.next_message() {
                return Ok(r?);
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(ClientError::Timeout("frame".into()));
            }
            self.stream.set_read_timeout(Some(left))?;
            match self.stream.read(&mut buf) {
                Ok(0) => return Err(ClientError::Closed),
                Ok(n) => self.decoder.push(&buf[..n]),
                Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Waits for a frame of type `ty`; an ERROR frame ends the wait. Other
    /// frames are discarded.
    pub fn recv_type(&mut self, ty: MessageType, timeout: Duration) -> Result<WireMessage, ClientError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let m = match self.recv(left) {
                Err(ClientError::Timeout(_)) => return Err(ClientError::Timeout(ty.to_string())),
                other => other?,
            };
            if m.msg_type == ty {
                return Ok(m);
            }
            if m.msg_type == MessageType::Error {
                return Err(ClientError::Server(m.parse_payload()?));
            }
        }
    }

    /// Sends `msg` and waits for the reply of the same type.
    pub fn request(&mut self, msg: &WireMessage, timeout: Duration) -> Result<WireMessage, ClientError> {
        self.send(msg)?;
        let reply = match msg.msg_type {
            MessageType::RenderRequest => MessageType::RenderResponse,
            MessageType::Ping => MessageType::Pong,
            MessageType::Hello => MessageType::Welcome,
            t => t,
        };
        self.recv_type(reply, timeout)
    }

    /// One PING/PONG round trip.
    pub fn ping(&mut self, timeout: Duration) -> Result<TimeSample, ClientError> {
        let send_wall = wall_now();
        let pong = self.request(&WireMessage::new(MessageType::Ping, 0.0, json!({})), timeout)?;
        Ok(TimeSample { send_wall, server_ts: pong.timestamp, recv_wall: wall_now() })
    }

    pub fn latest_state(&mut self, timeout: Duration) -> Result<StatePayload, ClientError> {
        Ok(self.recv_type(MessageType::State, timeout)?.parse_payload()?)
    }
}
