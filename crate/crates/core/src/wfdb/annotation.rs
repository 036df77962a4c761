use serde::{Deserialize, Serialize};

use super::{Result, WfdbError};

/// One entry of an MIT annotation file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    /// Absolute sample position.
    pub sample: u64,
    pub code: u8,
    pub symbol: char,
    pub subtype: i8,
    pub chan: u8,
    pub num: i8,
    pub aux: Option<String>,
}

pub(crate) const SKIP: u8 = 59;
pub(crate) const NUM: u8 = 60;
pub(crate) const SUB: u8 = 61;
pub(crate) const CHN: u8 = 62;
pub(crate) const AUX: u8 = 63;

// MIT annotation codes 0..=41; codes 15 and 17 are unassigned.
const CODE_TABLE: [Option<char>; 42] = [
    Some(' '), // NOTQRS
    Some('N'),
    Some('L'),
    Some('R'),
    Some('a'),
    Some('V'),
    Some('F'),
    Some('J'),
    Some('A'),
    Some('S'),
    Some('E'),
    Some('j'),
    Some('/'),
    Some('Q'),
    Some('~'),
    None,
    Some('|'),
    None,
    Some('s'),
    Some('T'),
    Some('*'),
    Some('D'),
    Some('"'),
    Some('='),
    Some('p'),
    Some('B'),
    Some('^'),
    Some('t'),
    Some('+'),
    Some('u'),
    Some('?'),
    Some('!'),
    Some('['),
    Some(']'),
    Some('e'),
    Some('n'),
    Some('@'),
    Some('x'),
    Some('f'),
    Some('('),
    Some(')'),
    Some('r'),
];

pub fn code_to_symbol(code: u8) -> Option<char> {
    CODE_TABLE.get(code as usize).copied().flatten()
}

pub fn symbol_to_code(symbol: char) -> Option<u8> {
    CODE_TABLE
        .iter()
        .position(|&s| s == Some(symbol))
        .map(|p| p as u8)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let out = self.bytes.get(self.pos..end).ok_or(WfdbError::TruncatedStream {
            needed: end,
            found: self.bytes.len(),
        })?;
        self.pos = end;
        Ok(out)
    }

    fn word(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
}

/// Parses an MIT-format annotation stream (16-bit little-endian words,
/// terminated by a zero word).
///
/// Each word carries a 6-bit code and a 10-bit field. For beat and other
/// annotation codes the field is the sample interval since the previous
/// annotation. The pseudo-codes use the field as data instead: `SKIP` adds a
/// following 32-bit interval (high half first), `NUM`/`SUB`/`CHN` set the
/// corresponding field of the preceding annotation and `AUX` attaches that
/// many bytes of text (padded to even length). `NUM` and `CHN` persist to
/// later annotations; `SUB` does not.
pub fn parse_annotations(bytes: &[u8]) -> Result<Vec<Annotation>> {
    let mut reader = Reader { bytes, pos: 0 };
    let mut out: Vec<Annotation> = Vec::new();
    let mut time: i64 = 0;
    let mut chan = 0u8;
    let mut num = 0i8;

    loop {
        let word = reader.word()?;
        let code = (word >> 10) as u8;
        let data = word & 0x03FF;
        match code {
            0 if data == 0 => return Ok(out),
            SKIP => {
                let hi = reader.word()? as u32;
                let lo = reader.word()? as u32;
                time += ((hi << 16) | lo) as i32 as i64;
            }
            NUM => {
                num = data as u8 as i8;
                if let Some(last) = out.last_mut() {
                    last.num = num;
                }
            }
            SUB => {
                if let Some(last) = out.last_mut() {
                    last.subtype = data as u8 as i8;
                }
            }
            CHN => {
                chan = data as u8;
                if let Some(last) = out.last_mut() {
                    last.chan = chan;
                }
            }
            AUX => {
                let len = data as usize;
                let text = reader.take(len)?;
                if len % 2 == 1 {
                    reader.take(1)?;
                }
                if let Some(last) = out.last_mut() {
                    let s = String::from_utf8_lossy(text);
                    last.aux = Some(s.trim_end_matches('\0').to_string());
                }
            }
            _ => {
                let symbol = code_to_symbol(code).ok_or(WfdbError::UnknownCode(code))?;
                time += data as i64;
                out.push(Annotation {
                    sample: time.max(0) as u64,
                    code,
                    symbol,
                    subtype: 0,
                    chan,
                    num,
                    aux: None,
                });
            }
        }
    }
}
