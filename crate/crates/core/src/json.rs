//! Model persistence. Floats are written with 17 significant digits so a
//! save/load/save cycle reproduces the same bytes.

use std::io;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::basis::BasisFamily;
use crate::cartesian::CartesianDynamics;
use crate::composite::{BlockDynamics, CompositeDynamics};
use crate::dynamics::EmissionDynamics;
use crate::error::{check_dim, Error, Result};
use crate::observation::ObservationLayout;
use crate::params::{InitialDistribution, ModelParams, TransitionMatrix};
use crate::prob::GaussianNoise;
use crate::quaternion::QuaternionDynamics;
use crate::standardize::Standardization;

#[derive(Serialize, Deserialize)]
struct ModelWire {
    #[serde(rename = "S")]
    modes: usize,
    pi: Vec<f64>,
    trans: Vec<Vec<f64>>,
    emissions: Vec<EmissionWire>,
    layout: ObservationLayout,
    standardization: Option<Standardization>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum EmissionWire {
    Cartesian {
        basis: BasisFamily,
        omega: Vec<Vec<f64>>,
        sigma: Vec<Vec<f64>>,
    },
    Quaternion {
        rotvec: [f64; 3],
        sigma: Vec<Vec<f64>>,
    },
    Composite {
        parts: Vec<EmissionWire>,
    },
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    for r in rows {
        check_dim(what, ncols, r.len())?;
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn cartesian_wire(c: &CartesianDynamics) -> EmissionWire {
    EmissionWire::Cartesian {
        basis: c.basis().clone(),
        omega: matrix_rows(c.weights()),
        sigma: matrix_rows(c.noise().covariance()),
    }
}

fn quaternion_wire(q: &QuaternionDynamics) -> EmissionWire {
    EmissionWire::Quaternion {
        rotvec: q.rotvec(),
        sigma: matrix_rows(q.noise().covariance()),
    }
}

fn to_wire(e: &EmissionDynamics) -> EmissionWire {
    match e {
        EmissionDynamics::Cartesian(c) => cartesian_wire(c),
        EmissionDynamics::Quaternion(q) => quaternion_wire(q),
        EmissionDynamics::Composite(c) => EmissionWire::Composite {
            parts: c
                .parts()
                .iter()
                .map(|p| match p {
                    BlockDynamics::Cartesian(c) => cartesian_wire(c),
                    BlockDynamics::Quaternion(q) => quaternion_wire(q),
                })
                .collect(),
        },
    }
}

fn block_from_wire(w: EmissionWire) -> Result<BlockDynamics> {
    match w {
        EmissionWire::Cartesian { basis, omega, sigma } => Ok(BlockDynamics::Cartesian(CartesianDynamics::new(
            basis,
            matrix_from_rows(&omega, "omega row")?,
            GaussianNoise::restore(matrix_from_rows(&sigma, "sigma row")?)?,
        )?)),
        EmissionWire::Quaternion { rotvec, sigma } => Ok(BlockDynamics::Quaternion(QuaternionDynamics::new(
            rotvec,
            GaussianNoise::restore(matrix_from_rows(&sigma, "sigma row")?)?,
        )?)),
        EmissionWire::Composite { .. } => Err(Error::InvalidParameter("nested composite emission".into())),
    }
}

fn from_wire(w: EmissionWire, layout: &ObservationLayout) -> Result<EmissionDynamics> {
    match w {
        EmissionWire::Composite { parts } => {
            let parts = parts.into_iter().map(block_from_wire).collect::<Result<_>>()?;
            Ok(EmissionDynamics::Composite(CompositeDynamics::new(layout.clone(), parts)?))
        }
        single => Ok(match block_from_wire(single)? {
            BlockDynamics::Cartesian(c) => EmissionDynamics::Cartesian(c),
            BlockDynamics::Quaternion(q) => EmissionDynamics::Quaternion(q),
        }),
    }
}

/// Pretty printer that writes every float as `{:.16e}`.
struct FullPrecision<'a>(PrettyFormatter<'a>);

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes any value with the full-precision float format.
pub fn to_string_full_precision<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

impl ModelParams {
    pub fn to_json(&self) -> Result<String> {
        let wire = ModelWire {
            modes: self.modes(),
            pi: self.init().weights().to_vec(),
            trans: self.trans().rows(),
            emissions: self.emissions().iter().map(to_wire).collect(),
            layout: self.layout().clone(),
            standardization: self.standardization().cloned(),
        };
        to_string_full_precision(&wire)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: ModelWire = serde_json::from_str(text)?;
        check_dim("S versus pi", wire.modes, wire.pi.len())?;
        let emissions = wire
            .emissions
            .into_iter()
            .map(|e| from_wire(e, &wire.layout))
            .collect::<Result<_>>()?;
        ModelParams::new(
            InitialDistribution::new(wire.pi)?,
            TransitionMatrix::from_rows(&wire.trans)?,
            emissions,
            wire.layout,
        )?
        .with_standardization(wire.standardization)
    }
}
