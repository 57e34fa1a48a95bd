//! Surface and map export as 16-bit PGM plus a small text header.

use crate::error::{Error, Result};
use crate::surface::GridGeometry;

pub const EXPORT_FORMAT: &str = "aaad-map/1";

#[derive(Debug, Clone, PartialEq)]
pub struct MapHeader {
    pub kind: String,
    pub geometry: GridGeometry,
    /// Value represented by PGM level 65535.
    pub value_scale: f64,
}

impl MapHeader {
    pub fn to_text(&self) -> String {
        format!(
            "format={EXPORT_FORMAT}\nkind={}\nwidth={}\nheight={}\ndeg_per_px={}\nvalue_scale={}\n",
            self.kind, self.geometry.width_px, self.geometry.height_px, self.geometry.deg_per_px, self.value_scale
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse(format!("header line {line:?}")))?;
            fields.insert(k.trim(), v.trim());
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| Error::Parse(format!("header missing {k}")));
        let format = get("format")?;
        if format != EXPORT_FORMAT {
            return Err(Error::UnsupportedVersion { expected: EXPORT_FORMAT, found: format.to_string() });
        }
        let num = |k: &str| get(k)?.parse::<f64>().map_err(|e| Error::Parse(format!("{k}: {e}")));
        let geometry = GridGeometry::new(num("width")? as u32, num("height")? as u32, num("deg_per_px")?)?;
        Ok(Self { kind: get("kind")?.to_string(), geometry, value_scale: num("value_scale")? })
    }
}

/// Encode row-major values as binary 16-bit PGM scaled so that `max`
/// maps to 65535. A zero `max` yields an all-black image.
pub fn encode_pgm16(geometry: &GridGeometry, values: &[f64]) -> Result<(Vec<u8>, f64)> {
    if values.len() != geometry.pixels() {
        return Err(Error::InvalidInput(format!("{} values for a {} grid", values.len(), geometry.describe())));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidInput(format!("cannot export value {v}")));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P5\n{} {}\n65535\n", geometry.width_px, geometry.height_px).into_bytes();
    out.reserve(values.len() * 2);
    for &v in values {
        let level = if max > 0.0 { (v / max * 65535.0).round() as u16 } else { 0 };
        out.extend_from_slice(&level.to_be_bytes());
    }
    Ok((out, max))
}

/// Decode a binary 16-bit PGM written by [`encode_pgm16`].
pub fn decode_pgm16(bytes: &[u8]) -> Result<(u32, u32, Vec<u16>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| Error::Parse(e.to_string()))?.to_string());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(Error::Parse("not a 16-bit binary PGM".into()));
    }
    let w: u32 = fields[1].parse().map_err(|_| Error::Parse("PGM width".into()))?;
    let h: u32 = fields[2].parse().map_err(|_| Error::Parse("PGM height".into()))?;
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != w as usize * h as usize * 2 {
        return Err(Error::Parse(format!("PGM body is {} bytes, expected {}", body.len(), w as usize * h as usize * 2)));
    }
    Ok((w, h, body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}
