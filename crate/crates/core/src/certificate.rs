//! The published certificates shipped with the crate.

use crate::error::{Error, Result};
use crate::network::{parse_controller, parse_net, OneHiddenNet, SaturatingController};
use serde::{Deserialize, Serialize};

/// One row of published training parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub k_f: f64,
    pub k_phi: f64,
    pub sample_gap: f64,
    pub alpha: f64,
    /// Bound `M` on `‖∂V/∂x‖₂`.
    pub grad_bound: f64,
    pub beta: f64,
    pub eps: f64,
}

impl TableRow {
    /// `K_f δ + α + K_φ δ`.
    pub fn generalization_bound(&self) -> f64 {
        crate::sysid::generalization_bound(self.k_f, self.sample_gap, self.alpha, self.k_phi)
    }

    /// `β / M`.
    pub fn tolerance(&self) -> f64 {
        self.beta / self.grad_bound
    }

    pub fn chain_holds(&self) -> bool {
        self.generalization_bound() < self.tolerance()
    }
}

#[derive(Clone, Debug)]
pub struct ShippedCertificate {
    pub system: &'static str,
    pub v: OneHiddenNet,
    pub controller: Option<SaturatingController>,
    pub table: TableRow,
}

struct Files {
    v: &'static str,
    controller: Option<&'static str>,
    table: &'static str,
}

fn files(system: &str) -> Option<(&'static str, Files)> {
    match system {
        "vanderpol" => Some((
            "vanderpol",
            Files {
                v: include_str!("../certificates/vanderpol/v.nnet"),
                controller: None,
                table: include_str!("../certificates/vanderpol/table.toml"),
            },
        )),
        "unicycle" => Some((
            "unicycle",
            Files {
                v: include_str!("../certificates/unicycle/v.nnet"),
                controller: Some(include_str!("../certificates/unicycle/controller.ctl")),
                table: include_str!("../certificates/unicycle/table.toml"),
            },
        )),
        "pendulum" => Some((
            "pendulum",
            Files {
                v: include_str!("../certificates/pendulum/v.nnet"),
                controller: Some(include_str!("../certificates/pendulum/controller.ctl")),
                table: include_str!("../certificates/pendulum/table.toml"),
            },
        )),
        _ => None,
    }
}

pub fn parse_table(text: &str) -> Result<TableRow> {
    toml::from_str(text).map_err(|e| Error::Format(format!("table: {e}")))
}

pub fn shipped(system: &str) -> Result<ShippedCertificate> {
    let (name, f) = files(system).ok_or_else(|| Error::Config(format!("no shipped certificate for `{system}`")))?;
    Ok(ShippedCertificate {
        system: name,
        v: parse_net(f.v)?,
        controller: f.controller.map(parse_controller).transpose()?,
        table: parse_table(f.table)?,
    })
}

/// Writes the shipped files for `system` into `dir`.
pub fn export_shipped(system: &str, dir: &std::path::Path) -> Result<()> {
    let (_, f) = files(system).ok_or_else(|| Error::Config(format!("no shipped certificate for `{system}`")))?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("v.nnet"), f.v)?;
    if let Some(c) = f.controller {
        std::fs::write(dir.join("controller.ctl"), c)?;
    }
    std::fs::write(dir.join("table.toml"), f.table)?;
    Ok(())
}

/// A certificate directory: `v.nnet`, and when present `controller.ctl`,
/// `model.nnet` (the learned dynamics) and `table.toml`.
#[derive(Clone, Debug)]
pub struct CertificateDir {
    pub v: OneHiddenNet,
    pub controller: Option<SaturatingController>,
    pub model: Option<OneHiddenNet>,
    pub table: Option<TableRow>,
}

impl CertificateDir {
    pub fn load(dir: &std::path::Path) -> Result<Self> {
        let read = |name: &str| -> Result<Option<String>> {
            match std::fs::read_to_string(dir.join(name)) {
                Ok(s) => Ok(Some(s)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e.into()),
            }
        };
        let v = read("v.nnet")?.ok_or_else(|| Error::Config(format!("{} has no v.nnet", dir.display())))?;
        Ok(CertificateDir {
            v: parse_net(&v)?,
            controller: read("controller.ctl")?.as_deref().map(parse_controller).transpose()?,
            model: read("model.nnet")?.as_deref().map(parse_net).transpose()?,
            table: read("table.toml")?.as_deref().map(parse_table).transpose()?,
        })
    }
}

pub fn table_to_string(row: &TableRow) -> String {
    toml::to_string(row).expect("a table row always serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_certificates_load() {
        for s in crate::dynamics::SYSTEM_NAMES {
            let c = shipped(s).unwrap();
            assert_eq!((c.v.input_dim(), c.v.hidden_dim(), c.v.output_dim()), (2, 6, 1));
            assert!(c.v.output_tanh);
            assert_eq!(c.controller.is_some(), s != "vanderpol");
        }
        assert!(shipped("lorenz").is_err());
    }

    #[test]
    fn vanderpol_value_at_origin() {
        // tanh(W₂ tanh(B₁) + B₂) evaluated independently in double precision.
        let c = shipped("vanderpol").unwrap();
        let v = c.v.eval(&[0.0, 0.0])[0];
        let b1 = [-2.30191, 0.38658, 0.47604, 0.83902, 0.87791, 1.18262f64];
        let w2 = [-1.32270, -0.73489, 1.87897, 0.89612, 1.65451, 1.17499f64];
        let z: f64 = b1.iter().zip(&w2).map(|(b, w)| w * b.tanh()).sum::<f64>() + 0.62172;
        assert_eq!(v, z.tanh());
        assert!((v - VANDERPOL_V0).abs() < 1e-12, "{v}");
    }

    /// Golden value of the published Van der Pol candidate at the origin.
    const VANDERPOL_V0: f64 = 0.999_943_174_596_119_7;

    #[test]
    fn table_rows() {
        let p = shipped("pendulum").unwrap().table;
        assert_eq!(p.k_phi, 633.806);
        assert_eq!(p.eps, 0.4);
        assert!(parse_table("k_f = 1.0\n").is_err());
        assert!(parse_table("k_f=1\nk_phi=1\nsample_gap=1\nalpha=1\ngrad_bound=1\nbeta=1\neps=1\nextra=2\n").is_err());
    }
}
