//! Columnar observation store with role-labelled columns.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Observations for one estimation problem.
///
/// `y` is the outcome. IVQR designs carry the endogenous regressor `d` and
/// the excluded instrument `w`; the location designs with auxiliary
/// moments carry the five `x` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub y: Vec<T>,
    pub d: Option<Vec<T>>,
    pub w: Option<Vec<T>>,
    pub x: Vec<Vec<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn location(y: Vec<T>) -> Result<Self> {
        Self::new(y, None, None, Vec::new())
    }

    pub fn location_with_x(y: Vec<T>, x: Vec<Vec<T>>) -> Result<Self> {
        Self::new(y, None, None, x)
    }

    pub fn ivqr(y: Vec<T>, d: Vec<T>, w: Vec<T>) -> Result<Self> {
        Self::new(y, Some(d), Some(w), Vec::new())
    }

    pub fn new(y: Vec<T>, d: Option<Vec<T>>, w: Option<Vec<T>>, x: Vec<Vec<T>>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidArgument("dataset must have n >= 1".into()));
        }
        let cols = d.iter().chain(w.iter()).chain(x.iter());
        for c in cols {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.len(),
                });
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite outcome".into()));
        }
        Ok(Dataset { y, d, w, x })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> Result<&[T]> {
        self.d.as_deref().ok_or_else(|| Error::MissingColumn("D".into()))
    }

    pub fn w(&self) -> Result<&[T]> {
        self.w.as_deref().ok_or_else(|| Error::MissingColumn("W".into()))
    }

    /// Instrument vector for observation `i`: `(1, D_i, W_i)` when the
    /// IVQR columns exist, otherwise the constant `(1)`.
    pub fn instrument(&self, i: usize) -> Vec<T> {
        match (&self.d, &self.w) {
            (Some(d), Some(w)) => vec![T::one(), d[i], w[i]],
            _ => vec![T::one()],
        }
    }

    pub fn instrument_dim(&self) -> usize {
        if self.d.is_some() && self.w.is_some() {
            3
        } else {
            1
        }
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        let c = |v: &Vec<T>| v.iter().map(|&a| U::lit(a.as_f64())).collect::<Vec<U>>();
        Dataset {
            y: c(&self.y),
            d: self.d.as_ref().map(c),
            w: self.w.as_ref().map(c),
            x: self.x.iter().map(c).collect(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["y".to_string()];
        if self.d.is_some() {
            h.push("D".into());
        }
        if self.w.is_some() {
            h.push("W".into());
        }
        for j in 0..self.x.len() {
            h.push(format!("x{}", j + 1));
        }
        h
    }

    /// Write a header row followed by one observation per line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(self.header())?;
        for i in 0..self.n() {
            let mut rec = vec![fmt_num(self.y[i])];
            if let Some(d) = &self.d {
                rec.push(fmt_num(d[i]));
            }
            if let Some(w) = &self.w {
                rec.push(fmt_num(w[i]));
            }
            for col in &self.x {
                rec.push(fmt_num(col[i]));
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read a CSV with columns `y[,D,W][,x1..x5]` (any order, header required).
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() {
            return Err(Error::Parse("empty file".into()));
        }
        let find = |name: &str| headers.iter().position(|h| h == name);
        let iy = find("y").ok_or_else(|| Error::MissingColumn("y".into()))?;
        let id = find("D");
        let iw = find("W");
        if id.is_some() != iw.is_some() {
            return Err(Error::Parse("columns D and W must appear together".into()));
        }
        let mut ix = Vec::new();
        for j in 1.. {
            match find(&format!("x{j}")) {
                Some(k) => ix.push(k),
                None => break,
            }
        }
        for h in headers.iter() {
            let known = h == "y"
                || h == "D"
                || h == "W"
                || (h.starts_with('x') && h[1..].parse::<usize>().is_ok_and(|j| j >= 1 && j <= ix.len()));
            if !known {
                return Err(Error::Parse(format!("unexpected column `{h}`")));
            }
        }
        let mut y = Vec::new();
        let mut d = id.map(|_| Vec::new());
        let mut w = iw.map(|_| Vec::new());
        let mut x = vec![Vec::new(); ix.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let get = |k: usize| -> Result<T> {
                let s = rec.get(k).unwrap_or("");
                s.parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| Error::Parse(format!("line {}: bad number `{s}`", row + 2)))
            };
            y.push(get(iy)?);
            if let (Some(k), Some(col)) = (id, d.as_mut()) {
                col.push(get(k)?);
            }
            if let (Some(k), Some(col)) = (iw, w.as_mut()) {
                col.push(get(k)?);
            }
            for (col, &k) in x.iter_mut().zip(&ix) {
                col.push(get(k)?);
            }
        }
        if y.is_empty() {
            return Err(Error::Parse("no observations".into()));
        }
        Dataset::new(y, d, w, x)
    }
}

/// Shortest round-trip decimal form.
pub(crate) fn fmt_num<T: Scalar>(v: T) -> String {
    format!("{}", v.as_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_ivqr() {
        let ds = Dataset::ivqr(vec![0.5, -1.25], vec![1.0, 2.0], vec![0.0, 3.5]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().next(), Some("y,D,W"));
        let back: Dataset<f64> = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn empty_and_malformed_inputs_rejected() {
        assert!(Dataset::<f64>::read_csv("".as_bytes()).is_err());
        assert!(Dataset::<f64>::read_csv("y\n".as_bytes()).is_err());
        assert!(Dataset::<f64>::read_csv("y,D\n1,2\n".as_bytes()).is_err());
        assert!(Dataset::<f64>::read_csv("y,z\n1,2\n".as_bytes()).is_err());
        assert!(Dataset::<f64>::read_csv("y\nabc\n".as_bytes()).is_err());
    }

    #[test]
    fn column_lengths_checked() {
        assert!(Dataset::ivqr(vec![1.0, 2.0], vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(Dataset::<f64>::location(vec![]).is_err());
    }

    #[test]
    fn instruments_follow_columns() {
        let loc = Dataset::location(vec![1.0_f64]).unwrap();
        assert_eq!(loc.instrument(0), vec![1.0]);
        let iv = Dataset::ivqr(vec![0.0_f64], vec![1.0], vec![2.0]).unwrap();
        assert_eq!(iv.instrument(0), vec![1.0, 1.0, 2.0]);
    }
}
