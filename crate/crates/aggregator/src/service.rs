//! TCP service wrapping the aggregator state, one thread per connection,
//! plus a small blocking client.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use pitpm_core::group::Backend;
use pitpm_core::multisig::CommitmentBundle;
use pitpm_core::Error;

use crate::state::{AggregatorState, AttestationQuote, CommitmentRequest, RefreshToken};
use crate::wire::{
    attestation_payload, decode_attestation_payload, decode_error_payload, decode_refresh_payload,
    error_payload, refresh_payload, Frame, MSG_ATTESTATION_QUOTE, MSG_COMMITMENT_BUNDLE,
    MSG_COMMITMENT_REQUEST, MSG_ERROR, MSG_REFRESH_EPOCH,
};

pub struct Server {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl Server {
    /// Bind and serve in background threads until the handle is dropped.
    pub fn spawn(
        addr: impl ToSocketAddrs,
        state: Arc<Mutex<AggregatorState>>,
    ) -> io::Result<Server> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let accept_shutdown = shutdown.clone();
        let accept_thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_shutdown.load(Ordering::SeqCst) {
                    break;
                }
                match stream {
                    Ok(stream) => {
                        let state = state.clone();
                        std::thread::spawn(move || {
                            if let Err(e) = handle_connection(stream, state) {
                                if e.kind() != io::ErrorKind::UnexpectedEof {
                                    log::debug!("connection ended: {e}");
                                }
                            }
                        });
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        });
        Ok(Server {
            addr,
            shutdown,
            accept_thread: Some(accept_thread),
        })
    }

    /// Serve on the calling thread; used by the CLI.
    pub fn run_blocking(
        addr: impl ToSocketAddrs,
        state: Arc<Mutex<AggregatorState>>,
    ) -> io::Result<()> {
        let listener = TcpListener::bind(addr)?;
        log::info!("aggregator listening on {}", listener.local_addr()?);
        for stream in listener.incoming() {
            let stream = stream?;
            let state = state.clone();
            std::thread::spawn(move || {
                let _ = handle_connection(stream, state);
            });
        }
        Ok(())
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // nudge the accept loop awake
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(mut stream: TcpStream, state: Arc<Mutex<AggregatorState>>) -> io::Result<()> {
    loop {
        let frame = Frame::read_from(&mut stream)?;
        let response = dispatch(&frame, &state);
        response.write_to(&mut stream)?;
    }
}

fn dispatch(frame: &Frame, state: &Arc<Mutex<AggregatorState>>) -> Frame {
    match frame.msg_type {
        MSG_COMMITMENT_REQUEST => match CommitmentRequest::decode(&frame.payload) {
            Ok(req) => {
                let mut guard = state.lock().expect("state mutex");
                if !guard.available {
                    return Frame::new(
                        MSG_ERROR,
                        error_payload(&Error::InvalidParams("aggregator unavailable".into())),
                    );
                }
                match guard.serve_commitment(&req) {
                    Ok(bundle) => Frame::new(MSG_COMMITMENT_BUNDLE, bundle.encode()),
                    Err(e) => Frame::new(MSG_ERROR, error_payload(&e)),
                }
            }
            Err(e) => Frame::new(MSG_ERROR, error_payload(&e)),
        },
        MSG_REFRESH_EPOCH => match decode_refresh_payload(&frame.payload) {
            Ok(token) => {
                let mut guard = state.lock().expect("state mutex");
                match guard.refresh_epoch(&token) {
                    Ok(epoch) => Frame::new(MSG_REFRESH_EPOCH, epoch.to_be_bytes().to_vec()),
                    Err(e) => Frame::new(MSG_ERROR, error_payload(&e)),
                }
            }
            Err(e) => Frame::new(MSG_ERROR, error_payload(&e)),
        },
        MSG_ATTESTATION_QUOTE => {
            let guard = state.lock().expect("state mutex");
            Frame::new(
                MSG_ATTESTATION_QUOTE,
                attestation_payload(&guard.attestation_quote()),
            )
        }
        other => Frame::new(
            MSG_ERROR,
            error_payload(&Error::Decode(format!(
                "unknown message type 0x{other:02x}"
            ))),
        ),
    }
}

/// Blocking client for the framed protocol.
pub struct Client {
    stream: TcpStream,
    backend: Backend,
}

/// Client-side failure: either a transport problem or an error frame.
#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("protocol: {0}")]
    Protocol(#[from] Error),
    #[error("aggregator error {code:#04x}: {reason}")]
    Remote { code: u8, reason: String },
    #[error("unexpected frame type {0:#04x}")]
    UnexpectedFrame(u8),
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs, backend: Backend) -> io::Result<Client> {
        Ok(Client {
            stream: TcpStream::connect(addr)?,
            backend,
        })
    }

    fn round_trip(&mut self, frame: Frame) -> Result<Frame, ClientError> {
        frame.write_to(&mut self.stream)?;
        let response = Frame::read_from(&mut self.stream)?;
        if response.msg_type == MSG_ERROR {
            let (code, reason) = decode_error_payload(&response.payload);
            return Err(ClientError::Remote { code, reason });
        }
        Ok(response)
    }

    pub fn request_commitment(
        &mut self,
        req: &CommitmentRequest,
    ) -> Result<CommitmentBundle, ClientError> {
        let response = self.round_trip(Frame::new(MSG_COMMITMENT_REQUEST, req.encode()))?;
        if response.msg_type != MSG_COMMITMENT_BUNDLE {
            return Err(ClientError::UnexpectedFrame(response.msg_type));
        }
        Ok(CommitmentBundle::decode(self.backend, &response.payload)?)
    }

    pub fn refresh_epoch(&mut self, token: &RefreshToken) -> Result<u64, ClientError> {
        let response = self.round_trip(Frame::new(MSG_REFRESH_EPOCH, refresh_payload(token)))?;
        if response.msg_type != MSG_REFRESH_EPOCH || response.payload.len() != 8 {
            return Err(ClientError::UnexpectedFrame(response.msg_type));
        }
        Ok(u64::from_be_bytes(
            response.payload[..8].try_into().expect("sized"),
        ))
    }

    pub fn attestation(&mut self) -> Result<AttestationQuote, ClientError> {
        let response = self.round_trip(Frame::new(MSG_ATTESTATION_QUOTE, Vec::new()))?;
        if response.msg_type != MSG_ATTESTATION_QUOTE {
            return Err(ClientError::UnexpectedFrame(response.msg_type));
        }
        Ok(decode_attestation_payload(&response.payload)?)
    }
}
