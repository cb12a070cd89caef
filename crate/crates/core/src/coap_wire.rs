//! CoAP message codec (RFC 7252).
//!
//! The wire layout is a fixed four-byte header, a token of up to eight bytes,
//! a run of delta-encoded options and an optional payload introduced by the
//! `0xFF` marker:
//!
//! ```text
//!  0                   1                   2                   3
//!  0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |Ver| T |  TKL  |      Code     |          Message ID           |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |   Token (if any, TKL bytes) ...
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |   Options (if any) ...
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |1 1 1 1 1 1 1 1|    Payload (if any) ...
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! ```
//!
//! The extended delta/length scheme has exactly one encoding per value, so
//! every byte string that decodes successfully is already canonical and
//! re-encodes to itself.

use std::fmt;

use thiserror::Error;

pub const VERSION: u8 = 1;
pub const PAYLOAD_MARKER: u8 = 0xFF;
pub const MAX_TOKEN_LEN: usize = 8;
/// Largest value length the extended-length scheme can express.
pub const MAX_OPTION_VALUE_LEN: usize = 65535 + 269;

/// Registered option numbers.
pub mod option {
    pub const IF_MATCH: u16 = 1;
    pub const URI_HOST: u16 = 3;
    pub const ETAG: u16 = 4;
    pub const IF_NONE_MATCH: u16 = 5;
    pub const OBSERVE: u16 = 6;
    pub const URI_PORT: u16 = 7;
    pub const LOCATION_PATH: u16 = 8;
    pub const URI_PATH: u16 = 11;
    pub const CONTENT_FORMAT: u16 = 12;
    pub const MAX_AGE: u16 = 14;
    pub const URI_QUERY: u16 = 15;
    pub const ACCEPT: u16 = 17;
    pub const LOCATION_QUERY: u16 = 20;
    pub const BLOCK2: u16 = 23;
    pub const BLOCK1: u16 = 27;
    pub const SIZE2: u16 = 28;
    pub const PROXY_URI: u16 = 35;
    pub const PROXY_SCHEME: u16 = 39;
    pub const SIZE1: u16 = 60;
}

/// Registered content-format identifiers.
pub mod content_format {
    pub const TEXT_PLAIN: u32 = 0;
    pub const LINK_FORMAT: u32 = 40;
    pub const XML: u32 = 41;
    pub const OCTET_STREAM: u32 = 42;
    pub const EXI: u32 = 47;
    pub const JSON: u32 = 50;
    pub const CBOR: u32 = 60;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    Confirmable = 0,
    NonConfirmable = 1,
    Acknowledgement = 2,
    Reset = 3,
}

impl MessageType {
    fn from_bits(bits: u8) -> Self {
        match bits & 0b11 {
            0 => MessageType::Confirmable,
            1 => MessageType::NonConfirmable,
            2 => MessageType::Acknowledgement,
            _ => MessageType::Reset,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// Request method or response code, split into a 3-bit class and 5-bit detail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Code {
    pub class: u8,
    pub detail: u8,
}

impl Code {
    pub const EMPTY: Code = Code::new(0, 0);
    pub const GET: Code = Code::new(0, 1);
    pub const POST: Code = Code::new(0, 2);
    pub const PUT: Code = Code::new(0, 3);
    pub const DELETE: Code = Code::new(0, 4);
    pub const CREATED: Code = Code::new(2, 1);
    pub const DELETED: Code = Code::new(2, 2);
    pub const VALID: Code = Code::new(2, 3);
    pub const CHANGED: Code = Code::new(2, 4);
    pub const CONTENT: Code = Code::new(2, 5);
    pub const BAD_REQUEST: Code = Code::new(4, 0);
    pub const NOT_FOUND: Code = Code::new(4, 4);
    pub const METHOD_NOT_ALLOWED: Code = Code::new(4, 5);
    pub const INTERNAL_SERVER_ERROR: Code = Code::new(5, 0);

    pub const fn new(class: u8, detail: u8) -> Self {
        Code { class, detail }
    }

    pub fn from_byte(byte: u8) -> Self {
        Code::new(byte >> 5, byte & 0x1F)
    }

    /// Packs the code into its wire byte, or `None` if either field is out of range.
    pub fn to_byte(self) -> Option<u8> {
        (self.class <= 7 && self.detail <= 31).then_some((self.class << 5) | self.detail)
    }

    pub fn is_request(self) -> bool {
        self.class == 0 && self.detail != 0
    }
}

/// Renders as `c.dd`, e.g. `0.01` for GET and `2.05` for Content.
impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.class, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoapOption {
    pub number: u16,
    pub value: Vec<u8>,
}

impl CoapOption {
    pub fn new(number: u16, value: impl Into<Vec<u8>>) -> Self {
        CoapOption {
            number,
            value: value.into(),
        }
    }

    /// Builds an option carrying a minimal-length big-endian unsigned integer.
    pub fn uint(number: u16, value: u32) -> Self {
        let bytes = value.to_be_bytes();
        let first = bytes.iter().position(|&b| b != 0).unwrap_or(bytes.len());
        CoapOption::new(number, &bytes[first..])
    }

    /// Interprets the value as an unsigned integer. Values longer than four
    /// bytes do not fit the uint option format.
    pub fn as_uint(&self) -> Option<u32> {
        if self.value.len() > 4 {
            return None;
        }
        Some(self.value.iter().fold(0u32, |acc, &b| (acc << 8) | u32::from(b)))
    }

    pub fn name(&self) -> Option<&'static str> {
        option_name(self.number)
    }

    /// `Name: value` text in the style of packet dissectors.
    pub fn describe(&self) -> String {
        let name = match self.name() {
            Some(name) => name.to_string(),
            None => format!("Unknown Option {}", self.number),
        };
        format!("{name}: {}", self.display_value())
    }

    fn display_value(&self) -> String {
        use option::*;
        match self.number {
            URI_HOST | LOCATION_PATH | URI_PATH | URI_QUERY | LOCATION_QUERY | PROXY_URI
            | PROXY_SCHEME => String::from_utf8_lossy(&self.value).into_owned(),
            CONTENT_FORMAT | ACCEPT => match self.as_uint() {
                Some(id) => content_format_name(id)
                    .map(str::to_string)
                    .unwrap_or_else(|| id.to_string()),
                None => hex::encode(&self.value),
            },
            BLOCK1 | BLOCK2 => match BlockValue::from_option(self) {
                Some(b) => format!("NUM:{}, M:{}, SZX:{}", b.num, u8::from(b.more), b.szx),
                None => hex::encode(&self.value),
            },
            OBSERVE | URI_PORT | MAX_AGE | SIZE1 | SIZE2 => match self.as_uint() {
                Some(v) => v.to_string(),
                None => hex::encode(&self.value),
            },
            _ => hex::encode(&self.value),
        }
    }
}

pub fn option_name(number: u16) -> Option<&'static str> {
    use option::*;
    Some(match number {
        IF_MATCH => "If-Match",
        URI_HOST => "Uri-Host",
        ETAG => "ETag",
        IF_NONE_MATCH => "If-None-Match",
        OBSERVE => "Observe",
        URI_PORT => "Uri-Port",
        LOCATION_PATH => "Location-Path",
        URI_PATH => "Uri-Path",
        CONTENT_FORMAT => "Content-Format",
        MAX_AGE => "Max-age",
        URI_QUERY => "Uri-Query",
        ACCEPT => "Accept",
        LOCATION_QUERY => "Location-Query",
        BLOCK2 => "Block2",
        BLOCK1 => "Block1",
        SIZE2 => "Size2",
        PROXY_URI => "Proxy-Uri",
        PROXY_SCHEME => "Proxy-Scheme",
        SIZE1 => "Size1",
        _ => return None,
    })
}

pub fn content_format_name(id: u32) -> Option<&'static str> {
    use content_format::*;
    Some(match id {
        TEXT_PLAIN => "text/plain; charset=utf-8",
        LINK_FORMAT => "application/link-format",
        XML => "application/xml",
        OCTET_STREAM => "application/octet-stream",
        EXI => "application/exi",
        JSON => "application/json",
        CBOR => "application/cbor",
        _ => return None,
    })
}

/// Block1/Block2 option value (RFC 7959 layout): `NUM << 4 | M << 3 | SZX`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockValue {
    pub num: u32,
    pub more: bool,
    pub szx: u8,
}

impl BlockValue {
    pub fn new(num: u32, more: bool, szx: u8) -> Self {
        BlockValue { num, more, szx }
    }

    /// Block size in bytes, `2^(szx + 4)`. SZX 7 is reserved and yields `None`.
    pub fn size(&self) -> Option<u32> {
        (self.szx < 7).then(|| 1u32 << (self.szx + 4))
    }

    pub fn from_option(opt: &CoapOption) -> Option<Self> {
        if opt.value.len() > 3 {
            return None;
        }
        let raw = opt.as_uint()?;
        Some(BlockValue {
            num: raw >> 4,
            more: raw & 0x8 != 0,
            szx: (raw & 0x7) as u8,
        })
    }

    pub fn to_option(self, number: u16) -> CoapOption {
        let raw = (self.num << 4) | (u32::from(self.more) << 3) | u32::from(self.szx & 0x7);
        CoapOption::uint(number, raw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoapMessage {
    pub version: u8,
    pub msg_type: MessageType,
    pub token: Vec<u8>,
    pub code: Code,
    pub message_id: u16,
    /// Sorted ascending by option number; repeated numbers keep their order.
    pub options: Vec<CoapOption>,
    pub payload: Vec<u8>,
}

impl CoapMessage {
    pub fn new(msg_type: MessageType, code: Code, message_id: u16) -> Self {
        CoapMessage {
            version: VERSION,
            msg_type,
            token: Vec::new(),
            code,
            message_id,
            options: Vec::new(),
            payload: Vec::new(),
        }
    }

    pub fn with_token(mut self, token: impl Into<Vec<u8>>) -> Self {
        self.token = token.into();
        self
    }

    pub fn with_payload(mut self, payload: impl Into<Vec<u8>>) -> Self {
        self.payload = payload.into();
        self
    }

    pub fn with_option(mut self, opt: CoapOption) -> Self {
        self.add_option(opt);
        self
    }

    /// Inserts after any existing options with the same or lower number.
    pub fn add_option(&mut self, opt: CoapOption) {
        let at = self.options.partition_point(|o| o.number <= opt.number);
        self.options.insert(at, opt);
    }

    /// Appends one Uri-Path option per `/`-separated segment.
    pub fn with_uri_path(mut self, path: &str) -> Self {
        for segment in path.split('/').filter(|s| !s.is_empty()) {
            self.add_option(CoapOption::new(option::URI_PATH, segment.as_bytes()));
        }
        self
    }

    pub fn option(&self, number: u16) -> Option<&CoapOption> {
        self.options.iter().find(|o| o.number == number)
    }

    pub fn options_numbered(&self, number: u16) -> impl Iterator<Item = &CoapOption> {
        self.options.iter().filter(move |o| o.number == number)
    }

    /// Uri-Path segments joined by `/`, without a leading slash.
    pub fn uri_path(&self) -> Option<String> {
        let segments: Vec<_> = self
            .options_numbered(option::URI_PATH)
            .map(|o| String::from_utf8_lossy(&o.value).into_owned())
            .collect();
        (!segments.is_empty()).then(|| segments.join("/"))
    }

    pub fn content_format(&self) -> Option<u32> {
        self.option(option::CONTENT_FORMAT)?.as_uint()
    }

    pub fn observe(&self) -> Option<u32> {
        self.option(option::OBSERVE)?.as_uint()
    }

    pub fn block2(&self) -> Option<BlockValue> {
        BlockValue::from_option(self.option(option::BLOCK2)?)
    }

    pub fn block1(&self) -> Option<BlockValue> {
        BlockValue::from_option(self.option(option::BLOCK1)?)
    }

    /// Checks every invariant the encoder relies on.
    pub fn validate(&self) -> Result<(), EncodeError> {
        let fail = |reason: String| Err(EncodeError::InvariantViolation { reason });
        if self.version != VERSION {
            return fail(format!("version {} (must be {VERSION})", self.version));
        }
        if self.token.len() > MAX_TOKEN_LEN {
            return fail(format!("token of {} bytes", self.token.len()));
        }
        if self.code.to_byte().is_none() {
            return fail(format!(
                "code class {} detail {} out of range",
                self.code.class, self.code.detail
            ));
        }
        if let Some(w) = self.options.windows(2).find(|w| w[0].number > w[1].number) {
            return fail(format!(
                "options out of order ({} before {})",
                w[0].number, w[1].number
            ));
        }
        if let Some(o) = self
            .options
            .iter()
            .find(|o| o.value.len() > MAX_OPTION_VALUE_LEN)
        {
            return fail(format!(
                "option {} value of {} bytes",
                o.number,
                o.value.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("message truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("invalid token length {length} at byte {offset}")]
    InvalidTokenLength { offset: usize, length: u8 },
    #[error("reserved option nibble 15 at byte {offset}")]
    ReservedOptionNibble { offset: usize },
    #[error("unsupported CoAP version {version} at byte {offset}")]
    UnsupportedVersion { offset: usize, version: u8 },
    #[error("payload marker at byte {offset} is not followed by a payload")]
    EmptyPayload { offset: usize },
    #[error("option number exceeds 65535 at byte {offset}")]
    OptionNumberOverflow { offset: usize },
}

impl DecodeError {
    pub fn offset(&self) -> usize {
        match *self {
            DecodeError::Truncated { offset }
            | DecodeError::InvalidTokenLength { offset, .. }
            | DecodeError::ReservedOptionNibble { offset }
            | DecodeError::UnsupportedVersion { offset, .. }
            | DecodeError::EmptyPayload { offset }
            | DecodeError::OptionNumberOverflow { offset } => offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("message violates CoAP invariants: {reason}")]
    InvariantViolation { reason: String },
}

/// Decodes one CoAP message occupying the whole of `bytes`.
pub fn decode_message(bytes: &[u8]) -> Result<CoapMessage, DecodeError> {
    if bytes.len() < 4 {
        return Err(DecodeError::Truncated { offset: 0 });
    }
    let version = bytes[0] >> 6;
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion { offset: 0, version });
    }
    let msg_type = MessageType::from_bits(bytes[0] >> 4);
    let tkl = bytes[0] & 0x0F;
    if usize::from(tkl) > MAX_TOKEN_LEN {
        return Err(DecodeError::InvalidTokenLength {
            offset: 0,
            length: tkl,
        });
    }
    let code = Code::from_byte(bytes[1]);
    let message_id = u16::from_be_bytes([bytes[2], bytes[3]]);

    let mut pos = 4;
    let token = take(bytes, &mut pos, usize::from(tkl))?.to_vec();

    let mut options = Vec::new();
    let mut payload = Vec::new();
    let mut number: u32 = 0;
    while pos < bytes.len() {
        let start = pos;
        let head = bytes[pos];
        pos += 1;
        if head == PAYLOAD_MARKER {
            if pos == bytes.len() {
                return Err(DecodeError::EmptyPayload { offset: start });
            }
            payload = bytes[pos..].to_vec();
            break;
        }
        let delta = read_extended(bytes, &mut pos, head >> 4, start)?;
        let length = read_extended(bytes, &mut pos, head & 0x0F, start)?;
        number += delta;
        if number > u32::from(u16::MAX) {
            return Err(DecodeError::OptionNumberOverflow { offset: start });
        }
        let value = take(bytes, &mut pos, length as usize)?.to_vec();
        options.push(CoapOption {
            number: number as u16,
            value,
        });
    }

    Ok(CoapMessage {
        version,
        msg_type,
        token,
        code,
        message_id,
        options,
        payload,
    })
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, len: usize) -> Result<&'a [u8], DecodeError> {
    let field = bytes
        .get(*pos..*pos + len)
        .ok_or(DecodeError::Truncated { offset: *pos })?;
    *pos += len;
    Ok(field)
}

fn read_extended(
    bytes: &[u8],
    pos: &mut usize,
    nibble: u8,
    option_start: usize,
) -> Result<u32, DecodeError> {
    match nibble {
        0..=12 => Ok(u32::from(nibble)),
        13 => {
            let ext = take(bytes, pos, 1)?;
            Ok(13 + u32::from(ext[0]))
        }
        14 => {
            let ext = take(bytes, pos, 2)?;
            Ok(269 + u32::from(u16::from_be_bytes([ext[0], ext[1]])))
        }
        _ => Err(DecodeError::ReservedOptionNibble {
            offset: option_start,
        }),
    }
}

/// Encodes `msg` in canonical wire form.
pub fn encode_message(msg: &CoapMessage) -> Result<Vec<u8>, EncodeError> {
    msg.validate()?;
    let mut out = Vec::with_capacity(
        4 + msg.token.len()
            + msg.options.iter().map(|o| o.value.len() + 5).sum::<usize>()
            + msg.payload.len()
            + 1,
    );
    out.push((msg.version << 6) | (msg.msg_type.as_u8() << 4) | msg.token.len() as u8);
    out.push(msg.code.to_byte().expect("validated"));
    out.extend_from_slice(&msg.message_id.to_be_bytes());
    out.extend_from_slice(&msg.token);

    let mut previous = 0u16;
    for opt in &msg.options {
        let delta = usize::from(opt.number - previous);
        let length = opt.value.len();
        out.push((nibble(delta) << 4) | nibble(length));
        push_extension(&mut out, delta);
        push_extension(&mut out, length);
        out.extend_from_slice(&opt.value);
        previous = opt.number;
    }

    if !msg.payload.is_empty() {
        out.push(PAYLOAD_MARKER);
        out.extend_from_slice(&msg.payload);
    }
    Ok(out)
}

fn nibble(value: usize) -> u8 {
    match value {
        0..=12 => value as u8,
        13..=268 => 13,
        _ => 14,
    }
}

fn push_extension(out: &mut Vec<u8>, value: usize) {
    match value {
        0..=12 => {}
        13..=268 => out.push((value - 13) as u8),
        _ => out.extend_from_slice(&((value - 269) as u16).to_be_bytes()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_get_header() {
        let msg = decode_message(&[0x40, 0x01, 0x30, 0x39]).unwrap();
        assert_eq!(msg.version, 1);
        assert_eq!(msg.msg_type, MessageType::Confirmable);
        assert!(msg.token.is_empty());
        assert_eq!(msg.code, Code::GET);
        assert_eq!(msg.message_id, 12345);
        assert!(msg.options.is_empty());
        assert!(msg.payload.is_empty());
    }

    #[test]
    fn decodes_non_content_header() {
        let msg = decode_message(&[0x50, 0x45, 0x00, 0x01]).unwrap();
        assert_eq!(msg.msg_type, MessageType::NonConfirmable);
        assert_eq!(msg.code, Code::CONTENT);
        assert_eq!(msg.code.to_string(), "2.05");
        assert_eq!(msg.message_id, 1);
    }

    #[test]
    fn short_input_is_truncated() {
        assert_eq!(
            decode_message(&[0x40, 0x01, 0x00]),
            Err(DecodeError::Truncated { offset: 0 })
        );
        assert_eq!(
            decode_message(&[]),
            Err(DecodeError::Truncated { offset: 0 })
        );
    }

    #[test]
    fn encodes_bare_get() {
        let msg = CoapMessage::new(MessageType::Confirmable, Code::GET, 0);
        assert_eq!(encode_message(&msg).unwrap(), vec![0x40, 0x01, 0x00, 0x00]);
    }

    #[test]
    fn encodes_single_uri_path() {
        let msg = CoapMessage::new(MessageType::Confirmable, Code::GET, 0).with_uri_path("temp");
        assert_eq!(
            encode_message(&msg).unwrap(),
            vec![0x40, 0x01, 0x00, 0x00, 0xB4, b't', b'e', b'm', b'p']
        );
    }

    #[test]
    fn extended_delta_and_length() {
        // Size1 (60) needs a one-byte delta extension, a 300-byte value a two-byte length.
        let msg = CoapMessage::new(MessageType::Confirmable, Code::POST, 7)
            .with_option(CoapOption::new(option::SIZE1, vec![0xAB; 300]));
        let bytes = encode_message(&msg).unwrap();
        assert_eq!(bytes[4], 0xDE);
        assert_eq!(bytes[5], 60 - 13);
        assert_eq!(&bytes[6..8], &(300u16 - 269).to_be_bytes());
        assert_eq!(decode_message(&bytes).unwrap(), msg);
    }

    #[test]
    fn token_length_above_eight_is_rejected() {
        for tkl in 9..=15u8 {
            let err = decode_message(&[0x40 | tkl, 0x01, 0, 0]).unwrap_err();
            assert_eq!(
                err,
                DecodeError::InvalidTokenLength {
                    offset: 0,
                    length: tkl
                }
            );
        }
    }

    #[test]
    fn token_past_end_is_truncated() {
        let err = decode_message(&[0x44, 0x01, 0, 0, 1, 2]).unwrap_err();
        assert_eq!(err, DecodeError::Truncated { offset: 4 });
    }

    #[test]
    fn reserved_nibbles() {
        // delta nibble 15 with length nibble 0
        let err = decode_message(&[0x40, 0x01, 0, 0, 0xF0]).unwrap_err();
        assert_eq!(err, DecodeError::ReservedOptionNibble { offset: 4 });
        // length nibble 15
        let err = decode_message(&[0x40, 0x01, 0, 0, 0xBF]).unwrap_err();
        assert_eq!(err, DecodeError::ReservedOptionNibble { offset: 4 });
    }

    #[test]
    fn option_value_past_end_is_truncated() {
        let err = decode_message(&[0x40, 0x01, 0, 0, 0xB4, b't', b'e']).unwrap_err();
        assert_eq!(err, DecodeError::Truncated { offset: 5 });
        let err = decode_message(&[0x40, 0x01, 0, 0, 0xD0]).unwrap_err();
        assert_eq!(err, DecodeError::Truncated { offset: 5 });
    }

    #[test]
    fn marker_without_payload_is_rejected() {
        let err = decode_message(&[0x40, 0x01, 0, 0, 0xFF]).unwrap_err();
        assert_eq!(err, DecodeError::EmptyPayload { offset: 4 });
    }

    #[test]
    fn option_number_overflow() {
        // two options each with delta 269 + 65535
        let mut bytes = vec![0x40, 0x01, 0, 0];
        bytes.extend_from_slice(&[0xE0, 0xFF, 0xFF, 0xE0, 0xFF, 0xFF]);
        let err = decode_message(&bytes).unwrap_err();
        assert!(matches!(err, DecodeError::OptionNumberOverflow { .. }), "{err:?}");
    }

    #[test]
    fn wrong_version_is_rejected() {
        let err = decode_message(&[0x80, 0x01, 0, 0]).unwrap_err();
        assert_eq!(
            err,
            DecodeError::UnsupportedVersion {
                offset: 0,
                version: 2
            }
        );
    }

    #[test]
    fn encoder_rejects_invariant_violations() {
        let base = CoapMessage::new(MessageType::Confirmable, Code::GET, 1);
        let long_token = base.clone().with_token(vec![0; 9]);
        assert!(encode_message(&long_token).is_err());

        let mut unsorted = base.clone();
        unsorted.options = vec![
            CoapOption::new(option::URI_PATH, "a"),
            CoapOption::new(option::OBSERVE, vec![]),
        ];
        assert!(encode_message(&unsorted).is_err());

        let mut bad_code = base.clone();
        bad_code.code = Code::new(8, 0);
        assert!(encode_message(&bad_code).is_err());

        let mut bad_version = base;
        bad_version.version = 2;
        assert!(encode_message(&bad_version).is_err());
    }

    #[test]
    fn uint_options_are_minimal() {
        assert!(CoapOption::uint(option::OBSERVE, 0).value.is_empty());
        assert_eq!(CoapOption::uint(option::OBSERVE, 0x0102).value, vec![1, 2]);
        assert_eq!(CoapOption::uint(option::OBSERVE, 0x0102).as_uint(), Some(0x0102));
    }

    #[test]
    fn block_values() {
        let b = BlockValue::new(3, true, 1);
        let opt = b.to_option(option::BLOCK2);
        assert_eq!(opt.as_uint(), Some((3 << 4) | 8 | 1));
        assert_eq!(BlockValue::from_option(&opt), Some(b));
        assert_eq!(b.size(), Some(32));
        assert_eq!(BlockValue::new(0, false, 7).size(), None);
    }

    #[test]
    fn descriptions() {
        assert_eq!(CoapOption::new(option::URI_PATH, "temp").describe(), "Uri-Path: temp");
        assert_eq!(
            CoapOption::uint(option::CONTENT_FORMAT, 0).describe(),
            "Content-Format: text/plain; charset=utf-8"
        );
        assert_eq!(
            BlockValue::new(0, false, 0).to_option(option::BLOCK2).describe(),
            "Block2: NUM:0, M:0, SZX:0"
        );
        assert_eq!(CoapOption::new(2000, vec![0xAB]).describe(), "Unknown Option 2000: ab");
    }

    #[test]
    fn add_option_keeps_order() {
        let msg = CoapMessage::new(MessageType::Confirmable, Code::GET, 0)
            .with_uri_path("a/b")
            .with_option(CoapOption::uint(option::OBSERVE, 0))
            .with_option(CoapOption::new(option::URI_PATH, "c"));
        let numbers: Vec<_> = msg.options.iter().map(|o| o.number).collect();
        assert_eq!(numbers, vec![6, 11, 11, 11]);
        assert_eq!(msg.uri_path().as_deref(), Some("a/b/c"));
    }

    proptest! {
        #[test]
        fn arbitrary_bytes_never_panic_and_reencode(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            if let Ok(msg) = decode_message(&bytes) {
                prop_assert_eq!(encode_message(&msg).unwrap(), bytes);
            }
        }
    }
}
