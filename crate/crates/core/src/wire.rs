//! Binary framing for the login and registration exchanges.
//!
//! ```text
//! frame          = length:u32be || msg_type:u8 || payload      (length = 1 + |payload| <= 4096)
//! LoginRequest   = CID(32) || N(32) || C(32) || T:u64be         (0x01, 104 bytes)
//! LoginResponse  = status:u8                                    (0x02)
//! RegisterReq    = tok_len:u16be || tok || pw_len:u16be || pw   (0x10)
//! RegisterResp   = status:u8 [|| alg:u8 || N(32) || y(32)]      (0x11, body iff status = 0)
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::authority::{Rejection, Verdict};
use crate::card::{CardImage, LoginMessage, CARD_BODY_LEN};
use crate::primitives::{Digest, HashAlgorithm, Timestamp};

pub const MAX_FRAME_LEN: u32 = 4096;
pub const HEADER_LEN: usize = 4;
pub const LOGIN_PAYLOAD_LEN: usize = 104;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("frame length {0} exceeds {MAX_FRAME_LEN}")]
    OversizedFrame(u32),
    #[error("frame length 0 leaves no room for a type byte")]
    EmptyFrame,
    #[error("unknown message type 0x{0:02x}")]
    UnknownMessageType(u8),
    #[error("{0} bytes follow the frame")]
    TrailingBytes(usize),
    #[error("{kind:?} payload must be {expected} bytes, got {actual}")]
    PayloadLength { kind: MessageType, expected: usize, actual: usize },
    #[error("unknown {kind:?} status 0x{status:02x}")]
    UnknownStatus { kind: MessageType, status: u8 },
    #[error("unknown hash algorithm id 0x{0:02x}")]
    UnknownAlgorithm(u8),
    #[error("string field is not valid UTF-8")]
    InvalidUtf8,
    #[error("string field of {0} bytes does not fit a u16 length")]
    FieldTooLong(usize),
    #[error("expected {expected:?}, got {actual:?}")]
    UnexpectedMessage { expected: MessageType, actual: MessageType },
    #[error("connection closed")]
    ConnectionClosed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    LoginRequest = 0x01,
    LoginResponse = 0x02,
    RegisterRequest = 0x10,
    RegisterResponse = 0x11,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        match b {
            0x01 => Ok(MessageType::LoginRequest),
            0x02 => Ok(MessageType::LoginResponse),
            0x10 => Ok(MessageType::RegisterRequest),
            0x11 => Ok(MessageType::RegisterResponse),
            other => Err(WireError::UnknownMessageType(other)),
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            MessageType::LoginRequest => "login-request",
            MessageType::LoginResponse => "login-response",
            MessageType::RegisterRequest => "register-request",
            MessageType::RegisterResponse => "register-response",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MessageType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MessageType, payload: Vec<u8>) -> Self {
        debug_assert!(payload.len() < MAX_FRAME_LEN as usize);
        Frame { msg_type, payload }
    }

    /// Value of the length prefix.
    pub fn length(&self) -> u32 {
        1 + self.payload.len() as u32
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 1 + self.payload.len());
        out.extend_from_slice(&self.length().to_be_bytes());
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.payload);
        out
    }
}

fn check_length(length: u32) -> Result<usize, WireError> {
    match length {
        0 => Err(WireError::EmptyFrame),
        n if n > MAX_FRAME_LEN => Err(WireError::OversizedFrame(n)),
        n => Ok(n as usize),
    }
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<(MessageType, &[u8]), WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated { needed: HEADER_LEN, available: bytes.len() });
    }
    let length = check_length(u32::from_be_bytes(bytes[..4].try_into().unwrap()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < length {
        return Err(WireError::Truncated { needed: HEADER_LEN + length, available: bytes.len() });
    }
    if body.len() > length {
        return Err(WireError::TrailingBytes(body.len() - length));
    }
    let msg_type = MessageType::from_byte(body[0])?;
    Ok((msg_type, &body[1..]))
}

/// Reads one frame from a stream. A clean EOF before any header byte is
/// [`WireError::ConnectionClosed`].
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Frame, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Err(WireError::ConnectionClosed),
            Ok(0) => return Err(WireError::Truncated { needed: HEADER_LEN, available: got }),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let length = check_length(u32::from_be_bytes(header))?;
    let mut body = vec![0u8; length];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => WireError::Truncated { needed: HEADER_LEN + length, available: HEADER_LEN },
        _ => WireError::Io(e),
    })?;
    let msg_type = MessageType::from_byte(body[0])?;
    body.remove(0);
    Ok(Frame { msg_type, payload: body })
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.to_bytes())?;
    w.flush()
}

/// Status byte of a [`MessageType::LoginResponse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum LoginStatus {
    Accept = 0x00,
    Expired = 0x01,
    FutureDated = 0x02,
    BadAuthenticator = 0x03,
    Replayed = 0x04,
    ServerError = 0x7F,
}

impl LoginStatus {
    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            0x00 => LoginStatus::Accept,
            0x01 => LoginStatus::Expired,
            0x02 => LoginStatus::FutureDated,
            0x03 => LoginStatus::BadAuthenticator,
            0x04 => LoginStatus::Replayed,
            0x7F => LoginStatus::ServerError,
            status => return Err(WireError::UnknownStatus { kind: MessageType::LoginResponse, status }),
        })
    }

    /// `None` for [`LoginStatus::ServerError`], which is not a verdict.
    pub fn verdict(self) -> Option<Verdict> {
        Some(match self {
            LoginStatus::Accept => Verdict::Accept,
            LoginStatus::Expired => Verdict::Reject(Rejection::Expired),
            LoginStatus::FutureDated => Verdict::Reject(Rejection::FutureDated),
            LoginStatus::BadAuthenticator => Verdict::Reject(Rejection::BadAuthenticator),
            LoginStatus::Replayed => Verdict::Reject(Rejection::Replayed),
            LoginStatus::ServerError => return None,
        })
    }
}

impl From<Verdict> for LoginStatus {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Accept => LoginStatus::Accept,
            Verdict::Reject(Rejection::Expired) => LoginStatus::Expired,
            Verdict::Reject(Rejection::FutureDated) => LoginStatus::FutureDated,
            Verdict::Reject(Rejection::BadAuthenticator) => LoginStatus::BadAuthenticator,
            Verdict::Reject(Rejection::Replayed) => LoginStatus::Replayed,
        }
    }
}

/// Status byte of a [`MessageType::RegisterResponse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum RegisterStatus {
    Issued = 0x00,
    Denied = 0x01,
    InvalidPassword = 0x02,
    ServerError = 0x7F,
}

impl RegisterStatus {
    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            0x00 => RegisterStatus::Issued,
            0x01 => RegisterStatus::Denied,
            0x02 => RegisterStatus::InvalidPassword,
            0x7F => RegisterStatus::ServerError,
            status => return Err(WireError::UnknownStatus { kind: MessageType::RegisterResponse, status }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegisterResponse {
    Issued(CardImage),
    /// Any non-zero status; carries no card body.
    Refused(RegisterStatus),
}

#[derive(Clone, PartialEq, Eq)]
pub enum Message {
    LoginRequest(LoginMessage),
    LoginResponse(LoginStatus),
    RegisterRequest { token: String, password: String },
    RegisterResponse(RegisterResponse),
}

impl std::fmt::Debug for Message {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Message::LoginRequest(m) => f.debug_tuple("LoginRequest").field(m).finish(),
            Message::LoginResponse(s) => f.debug_tuple("LoginResponse").field(s).finish(),
            Message::RegisterRequest { .. } => f.write_str("RegisterRequest { <redacted> }"),
            Message::RegisterResponse(r) => f.debug_tuple("RegisterResponse").field(r).finish(),
        }
    }
}

pub fn encode_login_request(msg: &LoginMessage) -> Frame {
    let mut payload = Vec::with_capacity(LOGIN_PAYLOAD_LEN);
    payload.extend_from_slice(msg.cid.as_bytes());
    payload.extend_from_slice(msg.n.as_bytes());
    payload.extend_from_slice(msg.c.as_bytes());
    payload.extend_from_slice(&msg.t.secs().to_be_bytes());
    Frame::new(MessageType::LoginRequest, payload)
}

pub fn decode_login_request(payload: &[u8]) -> Result<LoginMessage, WireError> {
    exact_len(MessageType::LoginRequest, payload, LOGIN_PAYLOAD_LEN)?;
    let block = |i: usize| Digest::from_slice(&payload[i * 32..(i + 1) * 32]).expect("32-byte slice");
    let t = u64::from_be_bytes(payload[96..104].try_into().unwrap());
    Ok(LoginMessage { cid: block(0), n: block(1), c: block(2), t: Timestamp::from_secs(t) })
}

fn exact_len(kind: MessageType, payload: &[u8], expected: usize) -> Result<(), WireError> {
    if payload.len() != expected {
        return Err(WireError::PayloadLength { kind, expected, actual: payload.len() });
    }
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), WireError> {
    let len = u16::try_from(s.len()).map_err(|_| WireError::FieldTooLong(s.len()))?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn take_str<'a>(payload: &'a [u8], pos: &mut usize) -> Result<&'a str, WireError> {
    let short = |needed| WireError::PayloadLength {
        kind: MessageType::RegisterRequest,
        expected: needed,
        actual: payload.len(),
    };
    let len_end = *pos + 2;
    if payload.len() < len_end {
        return Err(short(len_end));
    }
    let len = u16::from_be_bytes([payload[*pos], payload[*pos + 1]]) as usize;
    let end = len_end + len;
    if payload.len() < end {
        return Err(short(end));
    }
    *pos = end;
    std::str::from_utf8(&payload[len_end..end]).map_err(|_| WireError::InvalidUtf8)
}

impl Message {
    pub fn msg_type(&self) -> MessageType {
        match self {
            Message::LoginRequest(_) => MessageType::LoginRequest,
            Message::LoginResponse(_) => MessageType::LoginResponse,
            Message::RegisterRequest { .. } => MessageType::RegisterRequest,
            Message::RegisterResponse(_) => MessageType::RegisterResponse,
        }
    }

    pub fn encode(&self) -> Result<Frame, WireError> {
        let payload = match self {
            Message::LoginRequest(m) => return Ok(encode_login_request(m)),
            Message::LoginResponse(s) => vec![*s as u8],
            Message::RegisterRequest { token, password } => {
                let mut out = Vec::with_capacity(4 + token.len() + password.len());
                put_str(&mut out, token)?;
                put_str(&mut out, password)?;
                if out.len() >= MAX_FRAME_LEN as usize {
                    return Err(WireError::OversizedFrame(out.len() as u32 + 1));
                }
                out
            }
            Message::RegisterResponse(RegisterResponse::Issued(card)) => {
                let mut out = Vec::with_capacity(1 + CARD_BODY_LEN);
                out.push(RegisterStatus::Issued as u8);
                out.extend_from_slice(&card.body());
                out
            }
            Message::RegisterResponse(RegisterResponse::Refused(status)) => {
                debug_assert_ne!(*status, RegisterStatus::Issued);
                vec![*status as u8]
            }
        };
        Ok(Frame::new(self.msg_type(), payload))
    }

    pub fn decode(msg_type: MessageType, payload: &[u8]) -> Result<Message, WireError> {
        match msg_type {
            MessageType::LoginRequest => decode_login_request(payload).map(Message::LoginRequest),
            MessageType::LoginResponse => {
                exact_len(msg_type, payload, 1)?;
                LoginStatus::from_byte(payload[0]).map(Message::LoginResponse)
            }
            MessageType::RegisterRequest => {
                let mut pos = 0;
                let token = take_str(payload, &mut pos)?.to_owned();
                let password = take_str(payload, &mut pos)?.to_owned();
                if pos != payload.len() {
                    return Err(WireError::PayloadLength { kind: msg_type, expected: pos, actual: payload.len() });
                }
                Ok(Message::RegisterRequest { token, password })
            }
            MessageType::RegisterResponse => {
                let Some(&status) = payload.first() else {
                    return Err(WireError::PayloadLength { kind: msg_type, expected: 1, actual: 0 });
                };
                match RegisterStatus::from_byte(status)? {
                    RegisterStatus::Issued => {
                        exact_len(msg_type, payload, 1 + CARD_BODY_LEN)?;
                        let alg = HashAlgorithm::from_id(payload[1]).map_err(|_| WireError::UnknownAlgorithm(payload[1]))?;
                        let n = Digest::from_slice(&payload[2..34]).expect("32-byte slice");
                        let y = Digest::from_slice(&payload[34..66]).expect("32-byte slice");
                        Ok(Message::RegisterResponse(RegisterResponse::Issued(CardImage::new(alg, n, y))))
                    }
                    refused => {
                        exact_len(msg_type, payload, 1)?;
                        Ok(Message::RegisterResponse(RegisterResponse::Refused(refused)))
                    }
                }
            }
        }
    }

    pub fn from_frame(frame: &Frame) -> Result<Message, WireError> {
        Message::decode(frame.msg_type, &frame.payload)
    }

    /// Decodes one complete frame occupying all of `bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Message, WireError> {
        let (t, payload) = decode_frame(bytes)?;
        Message::decode(t, payload)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, WireError> {
        Ok(self.encode()?.to_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn login(b: u8, t: u64) -> LoginMessage {
        LoginMessage {
            cid: Digest::from_bytes([b; 32]),
            n: Digest::from_bytes([b.wrapping_add(1); 32]),
            c: Digest::from_bytes([b.wrapping_add(2); 32]),
            t: Timestamp::from_secs(t),
        }
    }

    #[test]
    fn login_frame_layout() {
        let f = encode_login_request(&login(9, 1));
        assert_eq!(f.length(), 105);
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..4], &105u32.to_be_bytes());
        assert_eq!(bytes.len(), 109);
        let (t, payload) = decode_frame(&bytes).unwrap();
        assert_eq!(t, MessageType::LoginRequest);
        assert_eq!(payload.len(), 104);

        let zero = LoginMessage { cid: Digest::ZERO, n: Digest::ZERO, c: Digest::ZERO, t: Timestamp::from_secs(0) };
        assert_eq!(encode_login_request(&zero).payload, vec![0u8; 104]);
    }

    #[test]
    fn frame_errors() {
        let mut oversized = 5000u32.to_be_bytes().to_vec();
        oversized.push(0x01);
        assert!(matches!(decode_frame(&oversized), Err(WireError::OversizedFrame(5000))));

        assert!(matches!(decode_frame(&[0, 0, 0, 1, 0x7F]), Err(WireError::UnknownMessageType(0x7F))));
        assert!(matches!(decode_frame(&[0, 0]), Err(WireError::Truncated { .. })));
        assert!(matches!(decode_frame(&[0, 0, 0, 2, 0x02]), Err(WireError::Truncated { .. })));
        assert!(matches!(decode_frame(&[0, 0, 0, 0]), Err(WireError::EmptyFrame)));
        assert!(matches!(decode_frame(&[0, 0, 0, 2, 0x02, 0, 9]), Err(WireError::TrailingBytes(1))));
    }

    #[test]
    fn login_payload_must_be_exact() {
        let mut f = encode_login_request(&login(1, 2));
        f.payload.push(0);
        assert!(matches!(
            Message::from_frame(&f),
            Err(WireError::PayloadLength { expected: 104, actual: 105, .. })
        ));
    }

    #[test]
    fn status_table() {
        let r = Message::from_bytes(&[0, 0, 0, 2, 0x02, 0x03]).unwrap();
        assert_eq!(r, Message::LoginResponse(LoginStatus::BadAuthenticator));
        assert_eq!(LoginStatus::BadAuthenticator.verdict(), Some(Verdict::Reject(Rejection::BadAuthenticator)));
        for v in [
            Verdict::Accept,
            Verdict::Reject(Rejection::Expired),
            Verdict::Reject(Rejection::FutureDated),
            Verdict::Reject(Rejection::BadAuthenticator),
            Verdict::Reject(Rejection::Replayed),
        ] {
            assert_eq!(LoginStatus::from(v).verdict(), Some(v));
        }
        assert_eq!(LoginStatus::ServerError.verdict(), None);
        assert!(matches!(LoginStatus::from_byte(0x05), Err(WireError::UnknownStatus { .. })));
    }

    #[test]
    fn register_request_round_trip() {
        let m = Message::RegisterRequest { token: "tok".into(), password: "alice".into() };
        let bytes = m.to_bytes().unwrap();
        assert_eq!(&bytes[5..], b"\x00\x03tok\x00\x05alice");
        assert_eq!(Message::from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn register_request_inconsistent_lengths() {
        // pw_len claims 9 bytes, 5 present
        let frame = Frame::new(MessageType::RegisterRequest, b"\x00\x03tok\x00\x09alice".to_vec());
        assert!(matches!(Message::from_frame(&frame), Err(WireError::PayloadLength { .. })));
        // extra byte after the password
        let frame = Frame::new(MessageType::RegisterRequest, b"\x00\x03tok\x00\x05alice!".to_vec());
        assert!(matches!(Message::from_frame(&frame), Err(WireError::PayloadLength { .. })));
        let frame = Frame::new(MessageType::RegisterRequest, b"\x00\x01\xff\x00\x00".to_vec());
        assert!(matches!(Message::from_frame(&frame), Err(WireError::InvalidUtf8)));
    }

    #[test]
    fn refused_registration_has_no_body() {
        let m = Message::RegisterResponse(RegisterResponse::Refused(RegisterStatus::Denied));
        assert_eq!(m.encode().unwrap().payload, vec![0x01]);
        let frame = Frame::new(MessageType::RegisterResponse, vec![0x01, 0xAA]);
        assert!(matches!(Message::from_frame(&frame), Err(WireError::PayloadLength { expected: 1, .. })));
        let frame = Frame::new(MessageType::RegisterResponse, vec![0x00; 10]);
        assert!(matches!(Message::from_frame(&frame), Err(WireError::PayloadLength { expected: 66, .. })));
        let frame = Frame::new(MessageType::RegisterResponse, vec![]);
        assert!(matches!(Message::from_frame(&frame), Err(WireError::PayloadLength { .. })));
    }

    #[test]
    fn stream_reader() {
        let a = encode_login_request(&login(3, 4));
        let b = Message::LoginResponse(LoginStatus::Accept).encode().unwrap();
        let mut buf = a.to_bytes();
        buf.extend(b.to_bytes());
        let mut cur = io::Cursor::new(buf);
        assert_eq!(read_frame(&mut cur).unwrap(), a);
        assert_eq!(read_frame(&mut cur).unwrap(), b);
        assert!(matches!(read_frame(&mut cur), Err(WireError::ConnectionClosed)));

        let mut short = io::Cursor::new(vec![0, 0, 0, 105, 1, 2, 3]);
        assert!(matches!(read_frame(&mut short), Err(WireError::Truncated { .. })));
        let mut huge = io::Cursor::new(vec![0xff, 0xff, 0xff, 0xff]);
        assert!(matches!(read_frame(&mut huge), Err(WireError::OversizedFrame(_))));
    }

    fn message() -> impl Strategy<Value = Message> {
        let digest = || any::<[u8; 32]>().prop_map(Digest::from_bytes);
        prop_oneof![
            (digest(), digest(), digest(), any::<u64>()).prop_map(|(cid, n, c, t)| {
                Message::LoginRequest(LoginMessage { cid, n, c, t: Timestamp::from_secs(t) })
            }),
            prop::sample::select(vec![0x00u8, 0x01, 0x02, 0x03, 0x04, 0x7F])
                .prop_map(|b| Message::LoginResponse(LoginStatus::from_byte(b).unwrap())),
            (".{0,64}", ".{0,64}").prop_map(|(token, password)| Message::RegisterRequest { token, password }),
            (any::<bool>(), digest(), digest()).prop_map(|(toy, n, y)| {
                let alg = if toy { HashAlgorithm::Toy8 } else { HashAlgorithm::Sha256 };
                Message::RegisterResponse(RegisterResponse::Issued(CardImage::new(alg, n, y)))
            }),
            prop::sample::select(vec![0x01u8, 0x02, 0x7F]).prop_map(|b| {
                Message::RegisterResponse(RegisterResponse::Refused(RegisterStatus::from_byte(b).unwrap()))
            }),
        ]
    }

    proptest! {
        #[test]
        fn messages_round_trip(m in message()) {
            let bytes = m.to_bytes().unwrap();
            prop_assert_eq!(Message::from_bytes(&bytes).unwrap(), m.clone());
            let frame = read_frame(&mut io::Cursor::new(&bytes)).unwrap();
            prop_assert_eq!(frame.to_bytes(), bytes);
        }

        #[test]
        fn decoders_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
            let _ = Message::from_bytes(&bytes);
            let _ = read_frame(&mut io::Cursor::new(&bytes));
        }
    }
}
