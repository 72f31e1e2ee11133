//! Number formatting shared by every JSON and CSV writer.
//!
//! Floats are printed with 17 significant digits in scientific notation,
//! which round-trips every `f64` exactly.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::Formatter;

/// `{:.16e}` for finite values, `NaN`, `inf` or `-inf` otherwise.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Compact JSON with 17-digit floats. serde_json writes non-finite floats
/// as `null`.
struct Sig17;

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(float(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value
        .serialize(&mut ser)
        .expect("serializing plain data cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn csv_row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(float).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.0, -0.0, 1.0, 5.0 / 18.0, 1e-300, -123456.789, f64::MAX, f64::MIN_POSITIVE] {
            let s = float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(float(5.0 / 18.0), "2.7777777777777779e-1");
        assert_eq!(float(f64::NAN), "NaN");
    }

    proptest::proptest! {
        #[test]
        fn any_finite_float_round_trips(bits in proptest::num::u64::ANY) {
            let x = f64::from_bits(bits);
            if x.is_finite() {
                proptest::prop_assert_eq!(float(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
                let json = to_json(&[x]);
                let back: Vec<f64> = serde_json::from_str(&json).unwrap();
                proptest::prop_assert_eq!(back[0].to_bits(), x.to_bits());
            }
        }
    }

    #[test]
    fn json_uses_seventeen_digits() {
        #[derive(Serialize)]
        struct S {
            x: f64,
            v: Vec<f64>,
            nan: f64,
        }
        let s = to_json(&S { x: 0.1, v: vec![1.0, 2.5], nan: f64::NAN });
        assert_eq!(
            s,
            r#"{"x":1.0000000000000001e-1,"v":[1.0000000000000000e0,2.5000000000000000e0],"nan":null}"#
        );
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64().unwrap(), 0.1);
    }
}
