//! Minimal strict DER encoding and decoding.
//!
//! The writer emits canonical DER only: definite lengths in shortest form and
//! minimal two's-complement integers. The reader rejects anything the writer
//! could not have produced (non-minimal lengths, redundant integer padding,
//! non-canonical booleans, trailing bytes), so decoding is injective on the
//! accepted input set.

use thiserror::Error;

pub const TAG_BOOLEAN: u8 = 0x01;
pub const TAG_INTEGER: u8 = 0x02;
pub const TAG_BIT_STRING: u8 = 0x03;
pub const TAG_OCTET_STRING: u8 = 0x04;
pub const TAG_NULL: u8 = 0x05;
pub const TAG_OID: u8 = 0x06;
pub const TAG_UTF8_STRING: u8 = 0x0c;
pub const TAG_ENUMERATED: u8 = 0x0a;
pub const TAG_GENERALIZED_TIME: u8 = 0x18;
pub const TAG_SEQUENCE: u8 = 0x30;

/// Context-specific constructed tag `[n]`.
pub const fn tag_context(n: u8) -> u8 {
    0xa0 | n
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DerError {
    #[error("truncated DER input at offset {0}")]
    Truncated(usize),
    #[error("unexpected tag {found:#04x} (wanted {expected:#04x}) at offset {offset}")]
    BadTag {
        expected: u8,
        found: u8,
        offset: usize,
    },
    #[error("non-minimal or indefinite length at offset {0}")]
    BadLength(usize),
    #[error("trailing bytes after element at offset {0}")]
    TrailingBytes(usize),
    #[error("non-minimal integer encoding at offset {0}")]
    NonMinimalInteger(usize),
    #[error("negative integer at offset {0}")]
    NegativeInteger(usize),
    #[error("integer out of range at offset {0}")]
    IntegerRange(usize),
    #[error("non-canonical boolean at offset {0}")]
    BadBoolean(usize),
    #[error("invalid UTF-8 in string at offset {0}")]
    BadUtf8(usize),
    #[error("malformed object identifier at offset {0}")]
    BadOid(usize),
    #[error("malformed GeneralizedTime at offset {0}")]
    BadTime(usize),
    #[error("malformed bit string at offset {0}")]
    BadBitString(usize),
}

// ---------------------------------------------------------------------------
// Writer
// ---------------------------------------------------------------------------

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Writer {
        Writer::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn tlv(&mut self, tag: u8, content: &[u8]) {
        self.buf.push(tag);
        self.length(content.len());
        self.buf.extend_from_slice(content);
    }

    fn length(&mut self, len: usize) {
        if len < 0x80 {
            self.buf.push(len as u8);
        } else {
            let bytes = (len as u64).to_be_bytes();
            let skip = bytes.iter().take_while(|&&b| b == 0).count();
            let sig = &bytes[skip..];
            self.buf.push(0x80 | sig.len() as u8);
            self.buf.extend_from_slice(sig);
        }
    }

    /// Nested constructed element; the closure fills the content.
    pub fn constructed(&mut self, tag: u8, fill: impl FnOnce(&mut Writer)) {
        let mut inner = Writer::new();
        fill(&mut inner);
        self.tlv(tag, &inner.buf);
    }

    pub fn sequence(&mut self, fill: impl FnOnce(&mut Writer)) {
        self.constructed(TAG_SEQUENCE, fill);
    }

    pub fn boolean(&mut self, v: bool) {
        self.tlv(TAG_BOOLEAN, &[if v { 0xff } else { 0x00 }]);
    }

    pub fn null(&mut self) {
        self.tlv(TAG_NULL, &[]);
    }

    /// Non-negative INTEGER from big-endian magnitude bytes.
    pub fn unsigned_be(&mut self, magnitude: &[u8]) {
        let skip = magnitude.iter().take_while(|&&b| b == 0).count();
        let sig = &magnitude[skip..];
        let mut content = Vec::with_capacity(sig.len() + 1);
        if sig.is_empty() {
            content.push(0);
        } else {
            if sig[0] & 0x80 != 0 {
                content.push(0);
            }
            content.extend_from_slice(sig);
        }
        self.tlv(TAG_INTEGER, &content);
    }

    pub fn uint(&mut self, v: u64) {
        self.unsigned_be(&v.to_be_bytes());
    }

    pub fn enumerated(&mut self, v: u64) {
        let bytes = v.to_be_bytes();
        let skip = bytes.iter().take_while(|&&b| b == 0).count().min(7);
        let sig = &bytes[skip..];
        let mut content = Vec::new();
        if sig[0] & 0x80 != 0 {
            content.push(0);
        }
        content.extend_from_slice(sig);
        self.tlv(TAG_ENUMERATED, &content);
    }

    pub fn octet_string(&mut self, bytes: &[u8]) {
        self.tlv(TAG_OCTET_STRING, bytes);
    }

    pub fn utf8_string(&mut self, s: &str) {
        self.tlv(TAG_UTF8_STRING, s.as_bytes());
    }

    /// BIT STRING with zero unused bits.
    pub fn bit_string(&mut self, bytes: &[u8]) {
        let mut content = Vec::with_capacity(bytes.len() + 1);
        content.push(0);
        content.extend_from_slice(bytes);
        self.tlv(TAG_BIT_STRING, &content);
    }

    pub fn oid(&mut self, arcs: &[u64]) {
        assert!(arcs.len() >= 2, "OID needs at least two arcs");
        let mut content = Vec::new();
        push_base128(&mut content, arcs[0] * 40 + arcs[1]);
        for &arc in &arcs[2..] {
            push_base128(&mut content, arc);
        }
        self.tlv(TAG_OID, &content);
    }

    /// GeneralizedTime `YYYYMMDDHHMMSSZ` from UTC epoch seconds.
    pub fn generalized_time(&mut self, epoch_secs: i64) {
        let dt = chrono::DateTime::from_timestamp(epoch_secs, 0)
            .expect("epoch seconds within chrono range");
        let s = dt.format("%Y%m%d%H%M%SZ").to_string();
        self.tlv(TAG_GENERALIZED_TIME, s.as_bytes());
    }
}

fn push_base128(out: &mut Vec<u8>, mut v: u64) {
    let mut tmp = [0u8; 10];
    let mut i = tmp.len();
    loop {
        i -= 1;
        tmp[i] = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for (j, b) in tmp[i..].iter().enumerate() {
        let last = j == tmp.len() - i - 1;
        out.push(if last { *b } else { *b | 0x80 });
    }
}

// ---------------------------------------------------------------------------
// Reader
// ---------------------------------------------------------------------------

pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Reader<'a> {
        Reader {
            data,
            pos: 0,
            base: 0,
        }
    }

    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.data.len()
    }

    /// Fails unless every byte has been consumed.
    pub fn finish(&self) -> Result<(), DerError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(DerError::TrailingBytes(self.offset()))
        }
    }

    pub fn peek_tag(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DerError> {
        if self.data.len() - self.pos < n {
            return Err(DerError::Truncated(self.offset()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_length(&mut self) -> Result<usize, DerError> {
        let at = self.offset();
        let first = self.take(1)?[0];
        if first < 0x80 {
            return Ok(first as usize);
        }
        if first == 0x80 {
            // indefinite form is not DER
            return Err(DerError::BadLength(at));
        }
        let n = (first & 0x7f) as usize;
        if n > 8 {
            return Err(DerError::BadLength(at));
        }
        let bytes = self.take(n)?;
        if bytes[0] == 0 {
            return Err(DerError::BadLength(at));
        }
        let mut len: u64 = 0;
        for &b in bytes {
            len = (len << 8) | b as u64;
        }
        if len < 0x80 {
            // should have used short form
            return Err(DerError::BadLength(at));
        }
        Ok(len as usize)
    }

    /// Reads one TLV with the expected tag, returning the content bytes.
    pub fn tlv(&mut self, expected: u8) -> Result<&'a [u8], DerError> {
        let at = self.offset();
        let tag = self.take(1)?[0];
        if tag != expected {
            return Err(DerError::BadTag {
                expected,
                found: tag,
                offset: at,
            });
        }
        let len = self.read_length()?;
        self.take(len)
    }

    /// Enters a constructed element, handing the caller a sub-reader.
    pub fn constructed(&mut self, tag: u8) -> Result<Reader<'a>, DerError> {
        let start = self.offset();
        let content = self.tlv(tag)?;
        Ok(Reader {
            data: content,
            pos: 0,
            base: start + (self.offset() - start - content.len()),
        })
    }

    pub fn sequence(&mut self) -> Result<Reader<'a>, DerError> {
        self.constructed(TAG_SEQUENCE)
    }

    pub fn boolean(&mut self) -> Result<bool, DerError> {
        let at = self.offset();
        let content = self.tlv(TAG_BOOLEAN)?;
        match content {
            [0x00] => Ok(false),
            [0xff] => Ok(true),
            _ => Err(DerError::BadBoolean(at)),
        }
    }

    pub fn null(&mut self) -> Result<(), DerError> {
        let at = self.offset();
        let content = self.tlv(TAG_NULL)?;
        if content.is_empty() {
            Ok(())
        } else {
            Err(DerError::BadLength(at))
        }
    }

    fn integer_content(&mut self, tag: u8) -> Result<&'a [u8], DerError> {
        let at = self.offset();
        let content = self.tlv(tag)?;
        if content.is_empty() {
            return Err(DerError::NonMinimalInteger(at));
        }
        if content.len() > 1 {
            // no redundant leading 0x00 / 0xff
            if content[0] == 0x00 && content[1] & 0x80 == 0 {
                return Err(DerError::NonMinimalInteger(at));
            }
            if content[0] == 0xff && content[1] & 0x80 != 0 {
                return Err(DerError::NonMinimalInteger(at));
            }
        }
        if content[0] & 0x80 != 0 {
            return Err(DerError::NegativeInteger(at));
        }
        Ok(content)
    }

    /// Non-negative INTEGER as big-endian magnitude (leading pad stripped).
    pub fn unsigned_be(&mut self) -> Result<&'a [u8], DerError> {
        let content = self.integer_content(TAG_INTEGER)?;
        Ok(if content.len() > 1 && content[0] == 0 {
            &content[1..]
        } else {
            content
        })
    }

    pub fn uint(&mut self) -> Result<u64, DerError> {
        let at = self.offset();
        let mag = self.unsigned_be()?;
        if mag.len() > 8 {
            return Err(DerError::IntegerRange(at));
        }
        let mut v = 0u64;
        for &b in mag {
            v = (v << 8) | b as u64;
        }
        Ok(v)
    }

    pub fn enumerated(&mut self) -> Result<u64, DerError> {
        let at = self.offset();
        let content = self.integer_content(TAG_ENUMERATED)?;
        let mag = if content.len() > 1 && content[0] == 0 {
            &content[1..]
        } else {
            content
        };
        if mag.len() > 8 {
            return Err(DerError::IntegerRange(at));
        }
        let mut v = 0u64;
        for &b in mag {
            v = (v << 8) | b as u64;
        }
        Ok(v)
    }

    pub fn octet_string(&mut self) -> Result<&'a [u8], DerError> {
        self.tlv(TAG_OCTET_STRING)
    }

    pub fn utf8_string(&mut self) -> Result<&'a str, DerError> {
        let at = self.offset();
        let content = self.tlv(TAG_UTF8_STRING)?;
        std::str::from_utf8(content).map_err(|_| DerError::BadUtf8(at))
    }

    /// BIT STRING content, requiring zero unused bits.
    pub fn bit_string(&mut self) -> Result<&'a [u8], DerError> {
        let at = self.offset();
        let content = self.tlv(TAG_BIT_STRING)?;
        match content.split_first() {
            Some((0, rest)) => Ok(rest),
            _ => Err(DerError::BadBitString(at)),
        }
    }

    pub fn oid(&mut self) -> Result<Vec<u64>, DerError> {
        let at = self.offset();
        let content = self.tlv(TAG_OID)?;
        if content.is_empty() {
            return Err(DerError::BadOid(at));
        }
        let mut arcs = Vec::new();
        let mut value: u64 = 0;
        let mut in_arc = false;
        for (i, &b) in content.iter().enumerate() {
            if !in_arc && b == 0x80 {
                // non-minimal base-128
                return Err(DerError::BadOid(at));
            }
            if value > (u64::MAX >> 7) {
                return Err(DerError::BadOid(at));
            }
            value = (value << 7) | (b & 0x7f) as u64;
            in_arc = b & 0x80 != 0;
            if !in_arc {
                if arcs.is_empty() {
                    let first = (value / 40).min(2);
                    arcs.push(first);
                    arcs.push(value - first * 40);
                } else {
                    arcs.push(value);
                }
                value = 0;
            } else if i == content.len() - 1 {
                return Err(DerError::BadOid(at));
            }
        }
        Ok(arcs)
    }

    /// GeneralizedTime `YYYYMMDDHHMMSSZ` to UTC epoch seconds.
    pub fn generalized_time(&mut self) -> Result<i64, DerError> {
        let at = self.offset();
        let content = self.tlv(TAG_GENERALIZED_TIME)?;
        let s = std::str::from_utf8(content).map_err(|_| DerError::BadTime(at))?;
        if s.len() != 15 || !s.ends_with('Z') {
            return Err(DerError::BadTime(at));
        }
        let dt = chrono::NaiveDateTime::parse_from_str(s, "%Y%m%d%H%M%SZ")
            .map_err(|_| DerError::BadTime(at))?;
        Ok(dt.and_utc().timestamp())
    }
}

// ---------------------------------------------------------------------------
// Pretty printer
// ---------------------------------------------------------------------------

fn tag_name(tag: u8) -> String {
    match tag {
        TAG_BOOLEAN => "BOOLEAN".into(),
        TAG_INTEGER => "INTEGER".into(),
        TAG_BIT_STRING => "BIT STRING".into(),
        TAG_OCTET_STRING => "OCTET STRING".into(),
        TAG_NULL => "NULL".into(),
        TAG_OID => "OBJECT IDENTIFIER".into(),
        TAG_UTF8_STRING => "UTF8String".into(),
        TAG_ENUMERATED => "ENUMERATED".into(),
        TAG_GENERALIZED_TIME => "GeneralizedTime".into(),
        TAG_SEQUENCE => "SEQUENCE".into(),
        t if t & 0xc0 == 0x80 => format!("[{}]", t & 0x1f),
        t => format!("tag {t:#04x}"),
    }
}

fn primitive_preview(tag: u8, content: &[u8]) -> String {
    match tag {
        TAG_UTF8_STRING | TAG_GENERALIZED_TIME => match std::str::from_utf8(content) {
            Ok(s) => format!("{s:?}"),
            Err(_) => hex::encode(content),
        },
        TAG_OID => {
            let mut w = Writer::new();
            w.tlv(TAG_OID, content);
            let bytes = w.into_bytes();
            match Reader::new(&bytes).oid() {
                Ok(arcs) => arcs
                    .iter()
                    .map(u64::to_string)
                    .collect::<Vec<_>>()
                    .join("."),
                Err(_) => hex::encode(content),
            }
        }
        TAG_BOOLEAN => match content {
            [0x00] => "FALSE".into(),
            [0xff] => "TRUE".into(),
            other => hex::encode(other),
        },
        _ => {
            let hex_str = hex::encode(content);
            if hex_str.len() > 64 {
                format!("{}... ({} bytes)", &hex_str[..64], content.len())
            } else {
                hex_str
            }
        }
    }
}

fn dump_level(data: &[u8], base: usize, indent: usize, out: &mut String) -> Result<(), DerError> {
    let mut pos = 0usize;
    while pos < data.len() {
        let offset = base + pos;
        let mut r = Reader::new(&data[pos..]);
        let tag = r.peek_tag().ok_or(DerError::Truncated(offset))?;
        let content = r.tlv(tag)?;
        let header_len = r.pos - content.len();
        let constructed = tag & 0x20 != 0;
        out.push_str(&format!(
            "{offset:5}: {:indent$}{} ({} bytes)",
            "",
            tag_name(tag),
            content.len(),
            indent = indent * 2
        ));
        if constructed {
            out.push('\n');
            dump_level(content, offset + header_len, indent + 1, out)?;
        } else {
            out.push_str(&format!("  {}\n", primitive_preview(tag, content)));
        }
        pos += header_len + content.len();
    }
    Ok(())
}

/// Indented dump of any DER document; rejects malformed input.
pub fn dump(bytes: &[u8]) -> Result<String, DerError> {
    let mut out = String::new();
    dump_level(bytes, 0, 0, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uint_round_trip() {
        for v in [0u64, 1, 127, 128, 255, 256, 2113559, u64::MAX] {
            let mut w = Writer::new();
            w.uint(v);
            let bytes = w.into_bytes();
            let mut r = Reader::new(&bytes);
            assert_eq!(r.uint().unwrap(), v);
            r.finish().unwrap();
        }
    }

    #[test]
    fn unsigned_be_high_bit_padded() {
        let mut w = Writer::new();
        w.unsigned_be(&[0x80, 0x01]);
        let bytes = w.into_bytes();
        assert_eq!(bytes, [0x02, 0x03, 0x00, 0x80, 0x01]);
        let mut r = Reader::new(&bytes);
        assert_eq!(r.unsigned_be().unwrap(), &[0x80, 0x01]);
    }

    #[test]
    fn rejects_non_minimal_integer() {
        let bytes = [0x02, 0x02, 0x00, 0x01];
        assert!(matches!(
            Reader::new(&bytes).unsigned_be(),
            Err(DerError::NonMinimalInteger(_))
        ));
    }

    #[test]
    fn rejects_non_minimal_length() {
        // length 3 in long form
        let bytes = [0x04, 0x81, 0x03, 1, 2, 3];
        assert!(matches!(
            Reader::new(&bytes).octet_string(),
            Err(DerError::BadLength(_))
        ));
    }

    #[test]
    fn rejects_indefinite_length() {
        let bytes = [0x30, 0x80, 0x00, 0x00];
        assert!(matches!(
            Reader::new(&bytes).sequence(),
            Err(DerError::BadLength(_))
        ));
    }

    #[test]
    fn rejects_trailing_bytes() {
        let mut w = Writer::new();
        w.uint(5);
        let mut bytes = w.into_bytes();
        bytes.push(0x00);
        let mut r = Reader::new(&bytes);
        r.uint().unwrap();
        assert_eq!(r.finish(), Err(DerError::TrailingBytes(3)));
    }

    #[test]
    fn rejects_non_canonical_boolean() {
        let bytes = [0x01, 0x01, 0x01];
        assert!(matches!(
            Reader::new(&bytes).boolean(),
            Err(DerError::BadBoolean(_))
        ));
    }

    #[test]
    fn oid_round_trip() {
        let arcs = [1u64, 2, 840, 10045, 4, 3, 2];
        let mut w = Writer::new();
        w.oid(&arcs);
        let bytes = w.into_bytes();
        let mut r = Reader::new(&bytes);
        assert_eq!(r.oid().unwrap(), arcs);
    }

    #[test]
    fn generalized_time_round_trip() {
        let epoch = 1704067200; // 2024-01-01T00:00:00Z
        let mut w = Writer::new();
        w.generalized_time(epoch);
        let bytes = w.into_bytes();
        assert_eq!(&bytes[2..], b"20240101000000Z");
        let mut r = Reader::new(&bytes);
        assert_eq!(r.generalized_time().unwrap(), epoch);
    }

    #[test]
    fn long_form_length() {
        let payload = vec![0xabu8; 300];
        let mut w = Writer::new();
        w.octet_string(&payload);
        let bytes = w.into_bytes();
        assert_eq!(&bytes[..4], &[0x04, 0x82, 0x01, 0x2c]);
        let mut r = Reader::new(&bytes);
        assert_eq!(r.octet_string().unwrap(), payload.as_slice());
    }
}
