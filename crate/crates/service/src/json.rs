//! JSON encoding with every float written to 17 significant digits, enough
//! to round-trip any `f64` bit-exactly.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};

#[derive(Debug, Clone, Copy, Default)]
pub struct Sig17;

/// Formats a finite `f64` with 17 significant digits. Exponents in
/// `[-5, 17)` use positional notation, others scientific.
pub fn format_f64(x: f64) -> String {
    let sci = format!("{x:.16e}");
    let exp: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-5..17).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, x)
    } else {
        sci
    }
}

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_vec<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = Vec::with_capacity(1024);
    value.serialize(&mut Serializer::with_formatter(&mut out, Sig17))?;
    Ok(out)
}

pub fn to_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    Ok(String::from_utf8(to_vec(value)?).expect("serde_json emits UTF-8"))
}
