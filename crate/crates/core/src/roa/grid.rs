use crate::dynamics::VectorField;
use crate::error::{Error, Result};
use crate::lyapunov::lie_derivative;
use crate::network::OneHiddenNet;
use crate::verifier::Region;
use std::fmt::Write;

/// `x1,x2,V,lie` on a `resolution × resolution` grid spanning the domain's
/// bounding box, endpoints included. Rows run over `x2` fastest.
pub fn export_grid(v: &OneHiddenNet, field: &dyn VectorField, domain: &Region, resolution: usize) -> Result<String> {
    if domain.dim() != 2 || v.input_dim() != 2 {
        return Err(Error::Unsupported("grid export is planar only".into()));
    }
    if resolution == 0 {
        return Err(Error::Config("grid resolution must be positive".into()));
    }
    let axis = |i: usize| -> Vec<f64> {
        let iv = domain.bounds.0[i];
        if resolution == 1 {
            return vec![iv.mid()];
        }
        (0..resolution)
            .map(|k| iv.lo + (iv.hi - iv.lo) * k as f64 / (resolution - 1) as f64)
            .collect()
    };
    let (xs, ys) = (axis(0), axis(1));
    let mut out = String::from("x1,x2,V,lie\n");
    for &a in &xs {
        for &b in &ys {
            let p = [a, b];
            let val = v.eval(&p)[0];
            let lie = lie_derivative(v, field, &p)?;
            writeln!(out, "{a},{b},{val},{lie}").expect("writing to a String");
        }
    }
    Ok(out)
}
