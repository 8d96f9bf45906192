use super::ControlSystem;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Training pairs `(x, u) → f(x, u)`.
#[derive(Clone, Debug)]
pub struct SampleSet {
    /// N × (n + m), states first.
    pub inputs: DMatrix<f64>,
    /// N × n
    pub targets: DMatrix<f64>,
    /// Covering radius of the samples over the sampled box.
    pub gap: f64,
    /// Grid cells per dimension.
    pub counts: Vec<usize>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

/// Cell-centred grid on the box `[lo, hi]` with at most `n_samples`
/// points, returned in a seed-dependent order together with the covering
/// radius `½‖spacing‖₂` and the per-dimension counts.
///
/// Counts are grown greedily on the dimension with the widest spacing, so
/// the grid is as close to isotropic as the budget allows.
pub fn sample_grid(lo: &[f64], hi: &[f64], n_samples: usize, seed: u64) -> Result<(Vec<Vec<f64>>, f64, Vec<usize>)> {
    if n_samples < 2 {
        return Err(Error::Config("sampling needs at least 2 samples".into()));
    }
    if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
        return Err(Error::Config("sampling box must have positive widths".into()));
    }
    let d = lo.len();
    let width: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
    let mut counts = vec![1usize; d];
    let mut total = 1usize;
    loop {
        let i = (0..d)
            .max_by(|&a, &b| (width[a] / counts[a] as f64).total_cmp(&(width[b] / counts[b] as f64)))
            .unwrap();
        let next = total / counts[i] * (counts[i] + 1);
        if next > n_samples {
            break;
        }
        total = next;
        counts[i] += 1;
    }
    let spacing: Vec<f64> = (0..d).map(|i| width[i] / counts[i] as f64).collect();
    let gap = 0.5 * spacing.iter().map(|s| s * s).sum::<f64>().sqrt();
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let points = order
        .into_iter()
        .map(|mut k| {
            let mut p = vec![0.0; d];
            for i in 0..d {
                let c = k % counts[i];
                k /= counts[i];
                p[i] = lo[i] + (c as f64 + 0.5) * spacing[i];
            }
            p
        })
        .collect();
    Ok((points, gap, counts))
}

/// Stratified samples over the bounding box of `D × U` with targets from
/// the true plant.
pub fn sample_data(sys: &ControlSystem, n_samples: usize, seed: u64) -> Result<SampleSet> {
    let (lo, hi) = sys.state_input_bounds();
    sample_data_on(sys, &lo, &hi, n_samples, seed)
}

/// As [`sample_data`] on an explicit state-input box.
pub fn sample_data_on(sys: &ControlSystem, lo: &[f64], hi: &[f64], n_samples: usize, seed: u64) -> Result<SampleSet> {
    let n = sys.state_dim;
    let d = n + sys.input_dim;
    if lo.len() != d {
        return Err(Error::Dimension(format!(
            "sampling box has {} dims, need {d}",
            lo.len()
        )));
    }
    let (points, gap, counts) = sample_grid(lo, hi, n_samples, seed)?;
    let targets: Vec<Vec<f64>> = points
        .par_iter()
        .map(|p| sys.rhs(&p[..n], &p[n..]))
        .collect::<Result<_>>()?;
    let inputs = DMatrix::from_fn(points.len(), d, |r, c| points[r][c]);
    let targets = DMatrix::from_fn(points.len(), n, |r, c| targets[r][c]);
    Ok(SampleSet {
        inputs,
        targets,
        gap,
        counts,
    })
}
