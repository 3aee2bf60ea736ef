//! Sweep dataset CSV. Floats are written with nine significant digits.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::config::BackendKind;
use crate::topology::{Metal, PatternKind, Strategy};
use crate::Error;

pub const HEADER: &str =
    "metal,pattern,strategy,size,k_on,v_dd,r_line,backend,i_sneak_A,margin_V,normalized_margin,error_pct,runtime_s,converged";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub metal: Metal,
    pub pattern: PatternKind,
    pub strategy: Strategy,
    pub size: usize,
    #[serde(with = "sig9")]
    pub k_on: f64,
    #[serde(with = "sig9")]
    pub v_dd: f64,
    #[serde(with = "sig9")]
    pub r_line: f64,
    pub backend: BackendKind,
    #[serde(rename = "i_sneak_A", with = "sig9_opt")]
    pub i_sneak: Option<f64>,
    #[serde(rename = "margin_V", with = "sig9_opt")]
    pub margin: Option<f64>,
    #[serde(with = "sig9_opt")]
    pub normalized_margin: Option<f64>,
    #[serde(with = "sig9_opt")]
    pub error_pct: Option<f64>,
    #[serde(with = "sig9")]
    pub runtime_s: f64,
    /// False when the point failed; the value columns are then empty.
    pub converged: bool,
}

pub fn format_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

mod sig9 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_sig9(*x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let text = String::deserialize(d)?;
        text.trim().parse().map_err(D::Error::custom)
    }
}

mod sig9_opt {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(v) => s.serialize_str(&super::format_sig9(*v)),
            None => s.serialize_str(""),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let text = String::deserialize(d)?;
        let t = text.trim();
        if t.is_empty() {
            Ok(None)
        } else {
            t.parse().map(Some).map_err(D::Error::custom)
        }
    }
}

pub fn write_dataset<W: Write>(rows: &[DatasetRow], w: W) -> Result<(), Error> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(HEADER.split(','))?;
    }
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(r: R) -> Result<Vec<DatasetRow>, Error> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != HEADER {
        return Err(super::ConfigError::Invalid(format!("unexpected dataset header `{}`", header.join(","))).into());
    }
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> DatasetRow {
        DatasetRow {
            metal: Metal::M5,
            pattern: PatternKind::AllZeros,
            strategy: Strategy::Grfc,
            size: 16,
            k_on: 3e-8,
            v_dd: 1.5,
            r_line: 5.869,
            backend: BackendKind::Simulator,
            i_sneak: Some(1.234_567_891_234e-9),
            margin: None,
            normalized_margin: Some(0.987_654_321),
            error_pct: None,
            runtime_s: 0.001_234,
            converged: true,
        }
    }

    #[test]
    fn header_and_format() {
        let mut buf = Vec::new();
        write_dataset(&[row()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "M5,all-zeros,GRFC,16,3.00000000e-8,1.50000000e0,5.86900000e0,simulator,1.23456789e-9,,9.87654321e-1,,1.23400000e-3,true"
        );
    }

    #[test]
    fn round_trip_is_stable() {
        let rows = vec![row(), DatasetRow { converged: false, i_sneak: None, ..row() }];
        let mut first = Vec::new();
        write_dataset(&rows, &mut first).unwrap();
        let back = read_dataset(first.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].i_sneak, None);
        let rel = (back[0].i_sneak.unwrap() - rows[0].i_sneak.unwrap()).abs() / rows[0].i_sneak.unwrap();
        assert!(rel < 5e-9);
        let mut second = Vec::new();
        write_dataset(&back, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(read_dataset("a,b\n1,2\n".as_bytes()).is_err());
    }
}
