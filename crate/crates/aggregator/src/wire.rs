//! Length-prefixed binary framing for the aggregator service.
//!
//! Frame layout: 4-byte BE length, 1-byte message type, payload.  The length
//! counts the type byte plus the payload.

use std::io::{Read, Write};

use pitpm_core::Error;

use crate::state::{AttestationQuote, RefreshToken};

pub const MSG_COMMITMENT_REQUEST: u8 = 0x01;
pub const MSG_COMMITMENT_BUNDLE: u8 = 0x02;
pub const MSG_ERROR: u8 = 0x03;
pub const MSG_REFRESH_EPOCH: u8 = 0x04;
pub const MSG_ATTESTATION_QUOTE: u8 = 0x05;

const MAX_FRAME: u32 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: u8, payload: Vec<u8>) -> Self {
        Frame { msg_type, payload }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.extend_from_slice(&(1 + self.payload.len() as u32).to_be_bytes());
        out.push(self.msg_type);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn write_to(&self, writer: &mut impl Write) -> std::io::Result<()> {
        writer.write_all(&self.to_bytes())?;
        writer.flush()
    }

    pub fn read_from(reader: &mut impl Read) -> std::io::Result<Frame> {
        let mut len_bytes = [0u8; 4];
        reader.read_exact(&mut len_bytes)?;
        let len = u32::from_be_bytes(len_bytes);
        if len == 0 || len > MAX_FRAME {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("frame length {len} out of bounds"),
            ));
        }
        let mut body = vec![0u8; len as usize];
        reader.read_exact(&mut body)?;
        Ok(Frame {
            msg_type: body[0],
            payload: body[1..].to_vec(),
        })
    }
}

/// Error frame payload: one code byte plus a UTF-8 reason.
pub fn error_payload(err: &Error) -> Vec<u8> {
    let code: u8 = match err {
        Error::AuthFailure(_) => 0x01,
        Error::UnknownSigner(_) => 0x02,
        Error::ThresholdUnmet { .. } => 0x03,
        Error::CounterReplay { .. } => 0x04,
        Error::InvalidParams(_) => 0x05,
        Error::Decode(_) => 0x06,
        _ => 0x7f,
    };
    let mut out = vec![code];
    out.extend_from_slice(err.to_string().as_bytes());
    out
}

pub fn decode_error_payload(payload: &[u8]) -> (u8, String) {
    if payload.is_empty() {
        return (0x7f, "empty error frame".into());
    }
    (
        payload[0],
        String::from_utf8_lossy(&payload[1..]).into_owned(),
    )
}

pub fn refresh_payload(token: &RefreshToken) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&token.epoch.to_be_bytes());
    out.extend_from_slice(&(token.nonce.len() as u16).to_be_bytes());
    out.extend_from_slice(&token.nonce);
    out.extend_from_slice(&token.mac);
    out
}

pub fn decode_refresh_payload(payload: &[u8]) -> Result<RefreshToken, Error> {
    if payload.len() < 8 + 2 + 32 {
        return Err(Error::Decode("refresh payload truncated".into()));
    }
    let epoch = u64::from_be_bytes(payload[..8].try_into().expect("sized"));
    let len = u16::from_be_bytes([payload[8], payload[9]]) as usize;
    if payload.len() != 10 + len + 32 {
        return Err(Error::Decode("refresh payload length mismatch".into()));
    }
    let nonce = payload[10..10 + len].to_vec();
    let mac: [u8; 32] = payload[10 + len..].try_into().expect("sized");
    Ok(RefreshToken { epoch, nonce, mac })
}

pub fn attestation_payload(quote: &AttestationQuote) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(quote.aggregator_id.len() as u16).to_be_bytes());
    out.extend_from_slice(&quote.aggregator_id);
    out.extend_from_slice(&quote.epoch.to_be_bytes());
    out.extend_from_slice(&quote.marker);
    out
}

pub fn decode_attestation_payload(payload: &[u8]) -> Result<AttestationQuote, Error> {
    if payload.len() < 2 {
        return Err(Error::Decode("attestation payload truncated".into()));
    }
    let id_len = u16::from_be_bytes([payload[0], payload[1]]) as usize;
    if payload.len() != 2 + id_len + 8 + 16 {
        return Err(Error::Decode("attestation payload length mismatch".into()));
    }
    let aggregator_id = payload[2..2 + id_len].to_vec();
    let epoch = u64::from_be_bytes(payload[2 + id_len..10 + id_len].try_into().expect("sized"));
    let marker: [u8; 16] = payload[10 + id_len..].try_into().expect("sized");
    Ok(AttestationQuote {
        aggregator_id,
        epoch,
        marker,
    })
}
