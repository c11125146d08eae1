//! JSON emission with fixed 17-significant-digit floats.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::Result;

/// Pretty formatter that writes every `f64` as `d.dddddddddddddddde±x`.
pub struct SciFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for SciFormatter<'_> {
    fn default() -> Self {
        SciFormatter {
            inner: PrettyFormatter::with_indent(b"  "),
        }
    }
}

/// `v` with 17 significant digits in exponent form.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            #[inline]
            fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.inner.$name(w $(, $arg)*)
            }
        )*
    };
}

impl Formatter for SciFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(format_f64(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    forward! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

pub fn to_string_pretty<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter::default());
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_parse_back_exactly() {
        let values = vec![0.1, 1.0 / 3.0, 2f64.powi(-35), 0.0, 1.0, 4.75f64.powi(8)];
        let text = to_string_pretty(&values).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(values, back);
    }
}
