use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// Decimal with 17 significant digits.
pub fn number(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_row(values: &[f64]) -> String {
    values.iter().map(|v| number(*v)).collect::<Vec<_>>().join(",")
}

/// A file created fresh (failing if it exists) or stdout.
pub enum Sink {
    File(BufWriter<File>),
    Stdout(io::StdoutLock<'static>),
}

impl Sink {
    pub fn open(path: Option<&Path>) -> io::Result<Self> {
        Ok(match path {
            Some(p) => Sink::File(BufWriter::new(create_new(p)?)),
            None => Sink::Stdout(io::stdout().lock()),
        })
    }

    pub fn line(&mut self, text: &str) -> io::Result<()> {
        match self {
            Sink::File(w) => writeln!(w, "{text}"),
            Sink::Stdout(w) => writeln!(w, "{text}"),
        }
    }

    pub fn finish(self) -> io::Result<()> {
        match self {
            Sink::File(mut w) => w.flush(),
            Sink::Stdout(mut w) => w.flush(),
        }
    }
}

pub fn create_new(path: &Path) -> io::Result<File> {
    OpenOptions::new().write(true).create_new(true).open(path).map_err(|e| {
        if e.kind() == io::ErrorKind::AlreadyExists {
            io::Error::new(e.kind(), format!("{} already exists; reports are write-once", path.display()))
        } else {
            io::Error::new(e.kind(), format!("{}: {e}", path.display()))
        }
    })
}

pub fn write_new(path: &Path, text: &str) -> io::Result<()> {
    let mut f = create_new(path)?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, f64::MIN_POSITIVE] {
            let s = number(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }
}
