//! Plain-text weight files.
//!
//! ```text
//! lyapcert-net 1
//! output_tanh true
//! W1 6 2
//! <6 rows of 2 values>
//! B1 6
//! <6 values>
//! W2 1 6
//! ...
//! B2 1
//! ...
//! ```
//!
//! Controllers use the header `lyapcert-controller 1` and the blocks
//! `C m`, `K m n`, `b m`. Matrices are row-major, one row per line, and
//! every value is written with 17 significant digits so a round trip is
//! exact. `#` starts a comment.

use super::{OneHiddenNet, SaturatingController};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;
use std::path::Path;

const NET_MAGIC: &str = "lyapcert-net";
const CTL_MAGIC: &str = "lyapcert-controller";
const VERSION: &str = "1";

fn write_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

fn write_vector(out: &mut String, name: &str, v: &DVector<f64>) {
    let _ = writeln!(out, "{name} {}", v.len());
    let row: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
    let _ = writeln!(out, "{}", row.join(" "));
}

pub fn net_to_string(net: &OneHiddenNet) -> String {
    let mut s = format!("{NET_MAGIC} {VERSION}\noutput_tanh {}\n", net.output_tanh);
    write_matrix(&mut s, "W1", &net.w1);
    write_vector(&mut s, "B1", &net.b1);
    write_matrix(&mut s, "W2", &net.w2);
    write_vector(&mut s, "B2", &net.b2);
    s
}

pub fn controller_to_string(ctl: &SaturatingController) -> String {
    let mut s = format!("{CTL_MAGIC} {VERSION}\n");
    write_vector(&mut s, "C", &ctl.c);
    write_matrix(&mut s, "K", &ctl.k);
    write_vector(&mut s, "b", &ctl.b);
    s
}

struct Tokens<'a> {
    it: std::vec::IntoIter<&'a str>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let toks: Vec<&str> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace)
            .collect();
        Tokens { it: toks.into_iter() }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.it
            .next()
            .ok_or_else(|| Error::Format(format!("unexpected end of file, expected {what}")))
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let t = self.next(word)?;
        if t != word {
            return Err(Error::Format(format!("expected `{word}`, found `{t}`")));
        }
        Ok(())
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let t = self.next(what)?;
        t.parse().map_err(|_| Error::Format(format!("bad {what} `{t}`")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let t = self.next(what)?;
        let v: f64 = t
            .parse()
            .map_err(|_| Error::Format(format!("bad number `{t}` in {what}")))?;
        if !v.is_finite() {
            return Err(Error::Format(format!("non-finite value in {what}")));
        }
        Ok(v)
    }

    fn matrix(&mut self, name: &str) -> Result<DMatrix<f64>> {
        self.expect(name)?;
        let r = self.usize(name)?;
        let c = self.usize(name)?;
        let mut vals = Vec::with_capacity(r * c);
        for _ in 0..r * c {
            vals.push(self.f64(name)?);
        }
        Ok(DMatrix::from_row_slice(r, c, &vals))
    }

    fn vector(&mut self, name: &str) -> Result<DVector<f64>> {
        self.expect(name)?;
        let n = self.usize(name)?;
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            vals.push(self.f64(name)?);
        }
        Ok(DVector::from_vec(vals))
    }

    fn finish(&mut self) -> Result<()> {
        match self.it.next() {
            None => Ok(()),
            Some(t) => Err(Error::Format(format!("trailing token `{t}`"))),
        }
    }
}

pub fn parse_net(text: &str) -> Result<OneHiddenNet> {
    let mut t = Tokens::new(text);
    t.expect(NET_MAGIC)?;
    t.expect(VERSION)?;
    t.expect("output_tanh")?;
    let output_tanh = match t.next("output_tanh flag")? {
        "true" => true,
        "false" => false,
        other => return Err(Error::Format(format!("bad output_tanh `{other}`"))),
    };
    let w1 = t.matrix("W1")?;
    let b1 = t.vector("B1")?;
    let w2 = t.matrix("W2")?;
    let b2 = t.vector("B2")?;
    t.finish()?;
    OneHiddenNet::new(w1, b1, w2, b2, output_tanh)
}

pub fn parse_controller(text: &str) -> Result<SaturatingController> {
    let mut t = Tokens::new(text);
    t.expect(CTL_MAGIC)?;
    t.expect(VERSION)?;
    let c = t.vector("C")?;
    let k = t.matrix("K")?;
    let b = t.vector("b")?;
    t.finish()?;
    SaturatingController::new(c, k, b)
}

pub fn save_net(net: &OneHiddenNet, path: &Path) -> Result<()> {
    std::fs::write(path, net_to_string(net))?;
    Ok(())
}

pub fn load_net(path: &Path) -> Result<OneHiddenNet> {
    parse_net(&std::fs::read_to_string(path)?)
}

pub fn save_controller(ctl: &SaturatingController, path: &Path) -> Result<()> {
    std::fs::write(path, controller_to_string(ctl))?;
    Ok(())
}

pub fn load_controller(path: &Path) -> Result<SaturatingController> {
    parse_controller(&std::fs::read_to_string(path)?)
}
