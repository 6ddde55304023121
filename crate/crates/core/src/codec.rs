//! Text payload stored in the parcel's QR code / RFID tag.
//!
//! ```text
//! PMS1|<id>|<weight_g>|<L>x<W>x<H>|<zone>|<M|N>|<F|R>|<addr-pct>|<crc8-hex>
//! ```
//!
//! The address is percent-encoded (bytes outside `0x21..=0x7E`, plus `%` and
//! `|`). The trailing checksum is CRC-8 (poly 0x07, init 0, no reflection,
//! no xor-out) over every byte up to and including the last `|`, written as
//! two uppercase hex digits. Parsing is strict: anything `encode` would not
//! have produced is rejected.

use thiserror::Error;

use crate::model::{
    validate_label, Fragility, Nature, ParcelLabel, RawLabel, ValidationErrors, ZoneSet, MAX_ADDRESS_BYTES,
};

pub const VERSION_TAG: &str = "PMS1";
const FIELD_COUNT: usize = 9;

/// Longest payload a valid label can produce: 46 bytes of fixed fields and
/// separators plus a fully escaped 120-byte address.
pub const MAX_PAYLOAD_LEN: usize = 46 + 3 * MAX_ADDRESS_BYTES;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("BAD_VERSION: expected {VERSION_TAG}, found {0:?}")]
    BadVersion(String),
    #[error("BAD_STRUCTURE: {0}")]
    BadStructure(String),
    #[error("BAD_CHECKSUM: expected {expected:02X}, found {found}")]
    BadChecksum { expected: u8, found: String },
    #[error(transparent)]
    Validation(#[from] ValidationErrors),
}

impl CodecError {
    pub fn code(&self) -> &'static str {
        match self {
            CodecError::BadVersion(_) => "BAD_VERSION",
            CodecError::BadStructure(_) => "BAD_STRUCTURE",
            CodecError::BadChecksum { .. } => "BAD_CHECKSUM",
            CodecError::Validation(_) => "VALIDATION",
        }
    }
}

const CRC8_TABLE: [u8; 256] = {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u8;
        let mut bit = 0;
        while bit < 8 {
            c = if c & 0x80 != 0 { (c << 1) ^ 0x07 } else { c << 1 };
            bit += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
};

/// CRC-8/SMBUS: polynomial 0x07, init 0x00, unreflected, xor-out 0x00.
pub fn crc8(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0u8, |crc, &b| CRC8_TABLE[(crc ^ b) as usize])
}

fn needs_escape(b: u8) -> bool {
    !(0x21..=0x7E).contains(&b) || b == b'%' || b == b'|'
}

fn percent_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for &b in s.as_bytes() {
        if needs_escape(b) {
            out.push_str(&format!("%{b:02X}"));
        } else {
            out.push(b as char);
        }
    }
    out
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

fn percent_decode(s: &str) -> Result<String, CodecError> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let (Some(hi), Some(lo)) = (
                bytes.get(i + 1).copied().and_then(hex_val),
                bytes.get(i + 2).copied().and_then(hex_val),
            ) else {
                return Err(CodecError::BadStructure(format!(
                    "malformed percent escape at address byte {i}"
                )));
            };
            let b = hi << 4 | lo;
            if !needs_escape(b) {
                return Err(CodecError::BadStructure(format!("needless percent escape %{b:02X}")));
            }
            out.push(b);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| CodecError::BadStructure("address is not valid UTF-8".into()))
}

/// Digits only, no sign, no leading zero.
fn parse_canonical_u32(field: &str, name: &str) -> Result<u32, CodecError> {
    let canonical =
        !field.is_empty() && field.bytes().all(|b| b.is_ascii_digit()) && (field == "0" || !field.starts_with('0'));
    if !canonical {
        return Err(CodecError::BadStructure(format!(
            "{name} is not a canonical integer: {field:?}"
        )));
    }
    field
        .parse()
        .map_err(|_| CodecError::BadStructure(format!("{name} out of range: {field:?}")))
}

pub fn encode(label: &ParcelLabel) -> String {
    let [l, w, h] = label.dims_mm;
    let nature = match label.nature {
        Nature::Metallic => 'M',
        Nature::Nonmetallic => 'N',
    };
    let fragility = match label.fragility {
        Fragility::Fragile => 'F',
        Fragility::Regular => 'R',
    };
    let body = format!(
        "{VERSION_TAG}|{}|{}|{l}x{w}x{h}|{}|{nature}|{fragility}|{}|",
        label.id,
        label.weight_g,
        label.zone,
        percent_encode(&label.address)
    );
    let crc = crc8(body.as_bytes());
    format!("{body}{crc:02X}")
}

pub fn decode(payload: &str, zones: &ZoneSet) -> Result<ParcelLabel, CodecError> {
    if payload.len() > MAX_PAYLOAD_LEN {
        return Err(CodecError::BadStructure(format!(
            "payload is {} bytes, limit {MAX_PAYLOAD_LEN}",
            payload.len()
        )));
    }
    if let Some(pos) = payload.bytes().position(|b| !(0x21..=0x7E).contains(&b)) {
        return Err(CodecError::BadStructure(format!(
            "byte {pos} is outside printable ASCII"
        )));
    }
    let fields: Vec<&str> = payload.split('|').collect();
    if fields[0] != VERSION_TAG {
        return Err(CodecError::BadVersion(fields[0].to_string()));
    }
    if fields.len() != FIELD_COUNT {
        return Err(CodecError::BadStructure(format!(
            "expected {FIELD_COUNT} fields, found {}",
            fields.len()
        )));
    }

    let found = fields[8];
    if found.len() != 2 || !found.bytes().all(|b| hex_val(b).is_some()) {
        return Err(CodecError::BadStructure(format!(
            "checksum field {found:?} is not two uppercase hex digits"
        )));
    }
    let body = &payload[..payload.len() - 2];
    let expected = crc8(body.as_bytes());
    if format!("{expected:02X}") != found {
        return Err(CodecError::BadChecksum {
            expected,
            found: found.to_string(),
        });
    }

    let weight_g = parse_canonical_u32(fields[2], "weight_g")?;
    let dims: Vec<&str> = fields[3].split('x').collect();
    if dims.len() != 3 {
        return Err(CodecError::BadStructure(format!(
            "dimensions {:?} are not LxWxH",
            fields[3]
        )));
    }
    let dims_mm = dims
        .iter()
        .map(|d| parse_canonical_u32(d, "dimension").map(i64::from))
        .collect::<Result<Vec<_>, _>>()?;
    let nature = match fields[5] {
        "M" => "METALLIC",
        "N" => "NONMETALLIC",
        other => return Err(CodecError::BadStructure(format!("nature flag {other:?} is not M or N"))),
    };
    let fragility = match fields[6] {
        "F" => "FRAGILE",
        "R" => "REGULAR",
        other => {
            return Err(CodecError::BadStructure(format!(
                "fragility flag {other:?} is not F or R"
            )))
        }
    };
    let address = percent_decode(fields[7])?;

    let raw = RawLabel {
        id: Some(fields[1].to_string()),
        weight_g: Some(i64::from(weight_g)),
        dims_mm: Some(dims_mm),
        zone: Some(fields[4].to_string()),
        nature: Some(nature.to_string()),
        fragility: Some(fragility.to_string()),
        address: Some(address),
    };
    Ok(validate_label(&raw, zones)?)
}
