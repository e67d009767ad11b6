//! CSV persistence: `patient_id,label,true_label[,synthetic],v0,...,v287`.
//! Unknown ground truth is written as `-1`. Values use Rust's shortest
//! round-trip float formatting, so a load after a save is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Class, Dataset, Spectrum, SPECTRUM_LEN};
use crate::error::{Error, Result};

fn header(with_synthetic: bool) -> String {
    let mut h = String::from("patient_id,label,true_label");
    if with_synthetic {
        h.push_str(",synthetic");
    }
    for i in 0..SPECTRUM_LEN {
        h.push_str(&format!(",v{i}"));
    }
    h
}

pub fn write_dataset<W: Write>(dataset: &Dataset, mut w: W) -> std::io::Result<()> {
    let with_synthetic = dataset.spectra.iter().any(|s| s.synthetic);
    writeln!(w, "{}", header(with_synthetic))?;
    for s in &dataset.spectra {
        let truth = s.true_label.map_or(-1, |c| c.index() as i64);
        write!(w, "{},{},{}", s.patient_id, s.label.index(), truth)?;
        if with_synthetic {
            write!(w, ",{}", u8::from(s.synthetic))?;
        }
        for v in &s.values {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for s in &dataset.spectra {
        if s.patient_id.contains([',', '\n', '\r']) {
            return Err(Error::argument(format!(
                "patient id {:?} cannot be written to CSV",
                s.patient_id
            )));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(dataset, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_class(field: &str, line: usize, what: &str) -> Result<Option<Class>> {
    match field.trim() {
        "0" => Ok(Some(Class::Healthy)),
        "1" => Ok(Some(Class::Tumor)),
        "-1" => Ok(None),
        other => Err(parse_err(line, format!("invalid {what} {other:?}"))),
    }
}

pub fn read_dataset<R: Read>(reader: R, name: &str) -> Result<Dataset> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let with_synthetic = loop {
        match lines.next() {
            None => return Err(parse_err(1, "no records")),
            Some((i, line)) => {
                let line = line.map_err(|e| parse_err(i + 1, e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                if line == header(false) {
                    break false;
                }
                if line == header(true) {
                    break true;
                }
                return Err(parse_err(i + 1, "unrecognized header"));
            }
        }
    };
    let fixed = if with_synthetic { 4 } else { 3 };
    let expected = fixed + SPECTRUM_LEN;

    let mut spectra = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(parse_err(
                lineno,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        let patient_id = fields[0].trim();
        if patient_id.is_empty() {
            return Err(parse_err(lineno, "empty patient id"));
        }
        let label =
            parse_class(fields[1], lineno, "label")?.ok_or_else(|| parse_err(lineno, "label must be 0 or 1"))?;
        let true_label = parse_class(fields[2], lineno, "true_label")?;
        let synthetic = if with_synthetic {
            match fields[3].trim() {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(lineno, format!("invalid synthetic flag {other:?}"))),
            }
        } else {
            false
        };
        let values = fields[fixed..]
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("v{j}: cannot parse {f:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(lineno, format!("v{j}: non-finite value")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        spectra.push(Spectrum {
            values,
            patient_id: patient_id.to_owned(),
            label,
            true_label,
            synthetic,
        });
    }
    if spectra.is_empty() {
        return Err(parse_err(1, "no records"));
    }
    Dataset::new(name, spectra)
}

/// Loads a dataset; its name is the file stem.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_dataset(file, &name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{generate_cohort, CohortConfig};

    #[test]
    fn cohort_round_trips_exactly() {
        let cfg = CohortConfig {
            n_patients: 5,
            ..CohortConfig::default()
        };
        let ds = generate_cohort(&cfg).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), &ds.name).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn synthetic_column_round_trips() {
        let mut s = Spectrum::new(vec![0.1; SPECTRUM_LEN], "p1", Class::Tumor);
        s.synthetic = true;
        let t = Spectrum {
            true_label: Some(Class::Healthy),
            ..Spectrum::new(vec![1e-300; SPECTRUM_LEN], "p2", Class::Tumor)
        };
        let ds = Dataset::new("aug", vec![s, t]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("patient_id,label,true_label,synthetic,v0,"));
        assert!(text.lines().nth(1).unwrap().starts_with("p1,1,-1,1,"));
        assert_eq!(read_dataset(buf.as_slice(), "aug").unwrap(), ds);
    }

    #[test]
    fn short_row_reports_its_line() {
        let mut text = header(false);
        text.push('\n');
        text.push_str("p,0,0");
        for _ in 0..287 {
            text.push_str(",1.0");
        }
        text.push('\n');
        match read_dataset(text.as_bytes(), "x") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("290"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_has_no_records() {
        match read_dataset(&b""[..], "x") {
            Err(Error::Parse { message, .. }) => assert_eq!(message, "no records"),
            other => panic!("unexpected {other:?}"),
        }
        let only_header = header(false);
        assert!(matches!(
            read_dataset(only_header.as_bytes(), "x"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn non_finite_value_rejected() {
        let mut text = header(false);
        text.push_str("\np,0,0");
        for j in 0..SPECTRUM_LEN {
            text.push_str(if j == 7 { ",NaN" } else { ",0" });
        }
        assert!(matches!(
            read_dataset(text.as_bytes(), "x"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
