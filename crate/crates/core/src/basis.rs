//! Feature maps `φ: ℝ^d → ℝ^{N+1}` used by the Cartesian dynamics. Every
//! family starts with the constant feature 1.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BasisFamily {
    /// `[1, y_1, …, y_d]`.
    Linear { d: usize },
    /// Constant plus isotropic Gaussian bumps `exp(-‖y - μ_i‖² / ς_i)`.
    Grbf {
        centers: Vec<Vec<f64>>,
        widths: Vec<f64>,
    },
    /// All monomials of total degree at most `k`, graded then
    /// lexicographically descending in the leading exponent.
    #[serde(rename = "poly")]
    Polynomial { d: usize, k: u32 },
}

impl BasisFamily {
    pub fn linear(d: usize) -> Self {
        BasisFamily::Linear { d }
    }

    pub fn polynomial(d: usize, k: u32) -> Self {
        BasisFamily::Polynomial { d, k }
    }

    /// Gaussian bumps with explicit centers and widths.
    pub fn grbf(centers: Vec<Vec<f64>>, widths: Vec<f64>) -> Result<Self> {
        let basis = BasisFamily::Grbf { centers, widths };
        basis.validate()?;
        Ok(basis)
    }

    /// Places `per_dim^d` centers on a uniform grid over the box
    /// `[lo_i, hi_i]`, all sharing one width.
    pub fn grbf_grid(lo: &[f64], hi: &[f64], per_dim: usize, width: f64) -> Result<Self> {
        check_dim("grid bounds", lo.len(), hi.len())?;
        if per_dim == 0 || lo.is_empty() {
            return Err(Error::InvalidParameter("empty GRBF grid".into()));
        }
        let d = lo.len();
        let axis = |i: usize, j: usize| {
            if per_dim == 1 {
                0.5 * (lo[i] + hi[i])
            } else {
                lo[i] + (hi[i] - lo[i]) * j as f64 / (per_dim - 1) as f64
            }
        };
        let total = per_dim.pow(d as u32);
        let centers = (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|i| {
                        let j = idx % per_dim;
                        idx /= per_dim;
                        axis(i, j)
                    })
                    .collect()
            })
            .collect();
        Self::grbf(centers, vec![width; total])
    }

    /// Checks internal consistency (center dimensions, positive widths).
    pub fn validate(&self) -> Result<()> {
        match self {
            BasisFamily::Linear { d } | BasisFamily::Polynomial { d, .. } if *d == 0 => {
                Err(Error::InvalidParameter("basis input dimension must be positive".into()))
            }
            BasisFamily::Polynomial { k: 0, .. } => {
                Err(Error::InvalidParameter("polynomial degree must be at least 1".into()))
            }
            BasisFamily::Grbf { centers, widths } => {
                if centers.is_empty() {
                    return Err(Error::InvalidParameter("GRBF needs at least one center".into()));
                }
                check_dim("GRBF widths", centers.len(), widths.len())?;
                let d = centers[0].len();
                if d == 0 {
                    return Err(Error::InvalidParameter("GRBF centers are empty".into()));
                }
                for c in centers {
                    check_dim("GRBF center", d, c.len())?;
                }
                if let Some(w) = widths.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
                    return Err(Error::InvalidParameter(format!("GRBF width {w} must be positive")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Input dimension `d`.
    pub fn input_dim(&self) -> usize {
        match self {
            BasisFamily::Linear { d } | BasisFamily::Polynomial { d, .. } => *d,
            BasisFamily::Grbf { centers, .. } => centers.first().map_or(0, Vec::len),
        }
    }

    /// Number of features `N + 1`.
    pub fn output_len(&self) -> usize {
        match self {
            BasisFamily::Linear { d } => d + 1,
            BasisFamily::Grbf { centers, .. } => centers.len() + 1,
            BasisFamily::Polynomial { d, k } => binomial(d + *k as usize, *k as usize),
        }
    }

    /// Column holding the monomial `y_i` (if the family has one).
    pub fn linear_feature(&self, i: usize) -> Option<usize> {
        match self {
            BasisFamily::Linear { d } | BasisFamily::Polynomial { d, .. } if i < *d => Some(1 + i),
            _ => None,
        }
    }

    /// Exponent vector of every polynomial feature, in evaluation order.
    pub fn monomial_exponents(&self) -> Option<Vec<Vec<u32>>> {
        let BasisFamily::Polynomial { d, k } = self else {
            return None;
        };
        let mut all = vec![vec![0u32; *d]];
        let mut prev: Vec<(usize, Vec<u32>)> = vec![(usize::MAX, vec![0; *d])];
        for _ in 1..=*k {
            let mut next = Vec::new();
            for i in 0..*d {
                let from = prev.partition_point(|(l, _)| *l < i);
                for (_, e) in &prev[from..] {
                    let mut e = e.clone();
                    e[i] += 1;
                    next.push((i, e));
                }
            }
            all.extend(next.iter().map(|(_, e)| e.clone()));
            prev = next;
        }
        Some(all)
    }

    pub fn evaluate(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim("basis input", self.input_dim(), y.len())?;
        let mut out = Vec::with_capacity(self.output_len());
        self.evaluate_into(y, &mut out);
        Ok(out)
    }

    /// Appends `φ(y)` to `out`; `y.len()` must equal `input_dim()`.
    pub(crate) fn evaluate_into(&self, y: &[f64], out: &mut Vec<f64>) {
        out.push(1.0);
        match self {
            BasisFamily::Linear { .. } => out.extend_from_slice(y),
            BasisFamily::Grbf { centers, widths } => {
                for (c, w) in centers.iter().zip(widths) {
                    let dist2: f64 = c.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    out.push((-dist2 / w).exp());
                }
            }
            BasisFamily::Polynomial { k, .. } => {
                // Degree-g block is obtained from degree-(g-1) block: the monomial
                // with exponents c is y_i times the one with c - e_i, where i is
                // the first nonzero exponent of c.
                // Monomials with leading index >= i form a suffix of the
                // previous block, so the order is preserved.
                let mut prev_start = 0;
                let mut prev_lead: Vec<usize> = vec![usize::MAX];
                for _ in 1..=*k {
                    let start = out.len();
                    let mut lead = Vec::with_capacity(prev_lead.len() * y.len());
                    for (i, &yi) in y.iter().enumerate() {
                        let from = prev_lead.partition_point(|&l| l < i);
                        for off in from..prev_lead.len() {
                            out.push(yi * out[prev_start + off]);
                            lead.push(i);
                        }
                    }
                    prev_start = start;
                    prev_lead = lead;
                }
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
