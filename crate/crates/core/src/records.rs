//! Bit-stable serialization of per-UE records.
//!
//! The records file is plain CSV with the fixed header below, rows sorted by
//! (drop_index, ue_id), numbers rounded to 6 significant digits, unavailable
//! errors rendered as the literal `inf` and an undefined neighbor gap as
//! `nan`. Booleans are `0`/`1`. The format is hand-rolled on both ends so a
//! re-run of the same campaign reproduces the file byte for byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::policy::{Technology, UeClass};
use crate::runner::UeRecord;
use crate::scenario::Vec3;

pub const RECORDS_HEADER: &str = "drop_index,ue_id,x,y,in_tunnel,class,zeta_ns,err_gnss_m,err_tdoa_m,err_fused_m,err_spntv_m,selected_tech,err_espntv_m,selected_espntv,err_efusion_m,selected_efusion";

#[derive(Debug, Error)]
pub enum RecordsError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
}

fn io_err(path: &Path, source: std::io::Error) -> RecordsError {
    RecordsError::Io { path: path.display().to_string(), source }
}

/// Rounds to 6 significant digits and prints without exponent notation.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".to_string() } else { "-inf".to_string() };
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(5 - magnitude);
    let rounded = (x * factor).round() / factor;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{:.*}", decimals, rounded)
}

fn tech_label(t: Technology) -> &'static str {
    match t {
        Technology::Gnss => "gnss",
        Technology::Tdoa => "tdoa",
        Technology::Fused => "fused",
    }
}

fn parse_tech(s: &str) -> Option<Technology> {
    match s {
        "gnss" => Some(Technology::Gnss),
        "tdoa" => Some(Technology::Tdoa),
        "fused" => Some(Technology::Fused),
        _ => None,
    }
}

fn record_line(r: &UeRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.drop_index,
        r.ue_id,
        format_sig(r.true_position.x),
        format_sig(r.true_position.y),
        u8::from(r.in_tunnel),
        match r.class {
            UeClass::A => "A",
            UeClass::B => "B",
        },
        format_sig(r.zeta_s.map_or(f64::NAN, |z| z * 1e9)),
        format_sig(r.err_gnss_m),
        format_sig(r.err_tdoa_m),
        format_sig(r.err_fused_m),
        format_sig(r.err_spntv_m),
        tech_label(r.selected_spntv),
        format_sig(r.err_espntv_m),
        tech_label(r.selected_espntv),
        format_sig(r.err_efusion_m),
        tech_label(r.selected_efusion),
    )
}

/// Writes the records file. Rows are sorted by (drop_index, ue_id) before
/// serialization so the output is independent of production order.
pub fn write_records(records: &[UeRecord], path: &Path) -> Result<(), RecordsError> {
    let mut rows: Vec<&UeRecord> = records.iter().collect();
    rows.sort_by_key(|r| (r.drop_index, r.ue_id));

    let mut out = String::with_capacity(rows.len() * 96 + RECORDS_HEADER.len() + 1);
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&record_line(r));
        out.push('\n');
    }

    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))?;
    Ok(())
}

fn parse_f64(field: &str) -> Option<f64> {
    match field {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        other => other.parse().ok(),
    }
}

/// Reads a records file back into memory (true position carries only the
/// serialized horizontal coordinates).
pub fn read_records(path: &Path) -> Result<Vec<UeRecord>, RecordsError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let malformed = |line: usize, reason: &str| RecordsError::Malformed {
        path: path.display().to_string(),
        line,
        reason: reason.to_string(),
    };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == RECORDS_HEADER => {}
        Some((_, other)) => {
            return Err(malformed(1, &format!("unexpected header: {other}")));
        }
        None => return Err(malformed(1, "empty file")),
    }

    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 16 {
            return Err(malformed(idx + 1, &format!("expected 16 fields, got {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64, RecordsError> {
            parse_f64(fields[i]).ok_or_else(|| malformed(idx + 1, &format!("bad number: {}", fields[i])))
        };
        let tech = |i: usize| -> Result<Technology, RecordsError> {
            parse_tech(fields[i]).ok_or_else(|| malformed(idx + 1, &format!("bad technology: {}", fields[i])))
        };
        let zeta_ns = num(6)?;
        records.push(UeRecord {
            drop_index: fields[0].parse().map_err(|_| malformed(idx + 1, "bad drop_index"))?,
            ue_id: fields[1].parse().map_err(|_| malformed(idx + 1, "bad ue_id"))?,
            true_position: Vec3::new(num(2)?, num(3)?, 0.0),
            in_tunnel: fields[4] == "1",
            class: match fields[5] {
                "A" => UeClass::A,
                "B" => UeClass::B,
                other => return Err(malformed(idx + 1, &format!("bad class: {other}"))),
            },
            zeta_s: if zeta_ns.is_nan() { None } else { Some(zeta_ns * 1e-9) },
            err_gnss_m: num(7)?,
            err_tdoa_m: num(8)?,
            err_fused_m: num(9)?,
            err_spntv_m: num(10)?,
            selected_spntv: tech(11)?,
            err_espntv_m: num(12)?,
            selected_espntv: tech(13)?,
            err_efusion_m: num(14)?,
            selected_efusion: tech(15)?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(123.456789), "123.457");
        assert_eq!(format_sig(0.00123456789), "0.00123457");
        assert_eq!(format_sig(-2.5), "-2.50000");
        assert_eq!(format_sig(1234567.0), "1234570");
        assert_eq!(format_sig(f64::INFINITY), "inf");
        assert_eq!(format_sig(f64::NAN), "nan");
    }

    #[test]
    fn single_record_writes_two_lines() {
        let record = UeRecord {
            drop_index: 0,
            ue_id: 3,
            true_position: Vec3::new(-12.5, 10.0, 1.5),
            in_tunnel: true,
            class: UeClass::B,
            zeta_s: Some(55e-9),
            err_gnss_m: 2.0,
            err_tdoa_m: f64::INFINITY,
            err_fused_m: 3.5,
            err_spntv_m: 2.0,
            selected_spntv: Technology::Gnss,
            err_espntv_m: f64::INFINITY,
            selected_espntv: Technology::Tdoa,
            err_efusion_m: f64::INFINITY,
            selected_efusion: Technology::Tdoa,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        write_records(&[record], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], RECORDS_HEADER);
        assert!(lines[1].contains(",inf,"), "unavailable must serialize as inf: {}", lines[1]);
        assert!(lines[1].starts_with("0,3,-12.5000,10.0000,1,B,55.0000,"));
    }

    #[test]
    fn records_round_trip() {
        let mk = |drop: u32, id: u32, err: f64| UeRecord {
            drop_index: drop,
            ue_id: id,
            true_position: Vec3::new(id as f64 * 7.125, 2.0, 1.5),
            in_tunnel: id % 2 == 0,
            class: if err <= 10.0 { UeClass::A } else { UeClass::B },
            zeta_s: if id % 3 == 0 { None } else { Some(id as f64 * 1e-9) },
            err_gnss_m: err,
            err_tdoa_m: err * 0.5,
            err_fused_m: err * 0.75,
            err_spntv_m: err,
            selected_spntv: Technology::Gnss,
            err_espntv_m: err * 0.5,
            selected_espntv: Technology::Tdoa,
            err_efusion_m: err * 0.75,
            selected_efusion: Technology::Fused,
        };
        let records: Vec<UeRecord> = (0..20).map(|i| mk(i / 7, i, i as f64)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_records(&records, &path).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(back.iter()) {
            assert_eq!(a.drop_index, b.drop_index);
            assert_eq!(a.ue_id, b.ue_id);
            assert_eq!(a.in_tunnel, b.in_tunnel);
            assert_eq!(a.class, b.class);
            assert_eq!(a.zeta_s.is_none(), b.zeta_s.is_none());
            assert_eq!(a.selected_spntv, b.selected_spntv);
        }
        // Same campaign, same file bytes.
        let path2 = dir.path().join("r2.csv");
        write_records(&records, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn read_rejects_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, format!("{RECORDS_HEADER}\n1,2,3\n")).unwrap();
        let err = read_records(&path).unwrap_err();
        assert!(err.to_string().contains("expected 16 fields"), "got {err}");
    }
}
