//! Fidelity between class states and entanglement across spatial cuts.

use std::fmt;
use std::io::Write;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::model::TtnModel;
use crate::par;
use crate::report::fmt_real;
use crate::tensor::{contract, reshape_group, svd, DenseTensor};
use crate::trainer::YES;

/// Isometry tolerance required before reading a Schmidt spectrum off the
/// top tensor.
pub const SPECTRUM_ISOMETRY_TOL: f64 = 1e-8;

/// `|⟨ψ_p|ψ_q⟩|` for `|ψ⟩ = Ψ|yes⟩`, contracted bottom-up through transfer
/// matrices. The two models may differ in `chi` but not in side or `d`.
pub fn ttn_overlap(p: &TtnModel, q: &TtnModel) -> Result<f64> {
    let (lp, lq) = (p.layout(), q.layout());
    if lp.side != lq.side || lp.d != lq.d {
        return Err(Error::LayoutMismatch {
            expected: *lp,
            found: *lq,
        });
    }
    let mut below: Vec<DenseTensor> = Vec::new();
    for k in 1..=lp.num_layers {
        let current = par::map_range(lp.layer_len(k), |m| -> Result<DenseTensor> {
            let tq = q.tensor(k, m);
            let transformed = if k == 1 {
                tq.clone()
            } else {
                // contract each child axis of T_q with the child's transfer matrix
                let mut x = tq.clone();
                for c in lp.children(k, m) {
                    x = contract(&x, &below[c], &[(1, 1)])?;
                }
                x
            };
            contract(p.tensor(k, m), &transformed, &[(1, 1), (2, 2), (3, 3), (4, 4)])
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        below = current;
    }
    Ok(below[0].get(&[YES, YES]).abs())
}

/// Symmetric matrix of pairwise class-state fidelities.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityMatrix {
    pub classes: Vec<usize>,
    values: Vec<f64>,
}

impl FidelityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.classes.len() + j]
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Value for a pair of class ids.
    pub fn between(&self, a: usize, b: usize) -> Option<f64> {
        let i = self.classes.iter().position(|&c| c == a)?;
        let j = self.classes.iter().position(|&c| c == b)?;
        Some(self.get(i, j))
    }

    /// Off-diagonal pairs `(class_a, class_b, F)` with `a < b` in matrix
    /// order, sorted by decreasing fidelity.
    pub fn ranked_pairs(&self) -> Vec<(usize, usize, f64)> {
        let n = self.len();
        let mut pairs: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| (self.classes[i], self.classes[j], self.get(i, j)))
            .collect();
        pairs.sort_by(|a, b| b.2.total_cmp(&a.2));
        pairs
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = self.classes.iter().map(|c| c.to_string()).collect();
        writeln!(w, "class,{}", header.join(","))?;
        for (i, c) in self.classes.iter().enumerate() {
            let row: Vec<String> = (0..self.len()).map(|j| fmt_real(self.get(i, j))).collect();
            writeln!(w, "{c},{}", row.join(","))?;
        }
        Ok(())
    }

    /// Log-scale character heatmap.
    pub fn heatmap(&self) -> String {
        const RAMP: &[u8] = b" .:-=+*#%@";
        let mut s = String::from("      ");
        for c in &self.classes {
            s.push_str(&format!("{c:>3}"));
        }
        s.push('\n');
        for (i, c) in self.classes.iter().enumerate() {
            s.push_str(&format!("{c:>5} "));
            for j in 0..self.len() {
                // map [1e-6, 1] onto the ramp
                let v = self.get(i, j).max(1e-6).log10();
                let level = (((v + 6.0) / 6.0) * (RAMP.len() - 1) as f64).round() as usize;
                s.push_str(&format!("  {}", RAMP[level.min(RAMP.len() - 1)] as char));
            }
            s.push('\n');
        }
        s
    }
}

/// All pairwise fidelities, computed once per unordered pair.
pub fn fidelity_matrix(ensemble: &Ensemble) -> Result<FidelityMatrix> {
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::Domain("fidelity matrix needs at least 2 class models".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let models = ensemble.models();
    let overlaps = par::map(&pairs, |&(i, j)| ttn_overlap(&models[i], &models[j]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![0.0; n * n];
    for (&(i, j), f) in pairs.iter().zip(overlaps) {
        values[i * n + j] = f;
        values[j * n + i] = f;
    }
    Ok(FidelityMatrix {
        classes: ensemble.classes().to_vec(),
        values,
    })
}

/// Spatial bipartition of the image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cut {
    /// Upper half (top-left, top-right) against lower half.
    UpDown,
    /// Left half (top-left, bottom-left) against right half.
    LeftRight,
}

impl Cut {
    pub const ALL: [Cut; 2] = [Cut::UpDown, Cut::LeftRight];

    fn groups(self) -> [Vec<usize>; 2] {
        match self {
            Cut::UpDown => [vec![0, 1], vec![2, 3]],
            Cut::LeftRight => [vec![0, 2], vec![1, 3]],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Cut::UpDown => "up-down",
            Cut::LeftRight => "left-right",
        }
    }
}

impl fmt::Display for Cut {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntanglementSpectrum {
    pub cut: Cut,
    /// Normalized Schmidt values, descending, `Σ Λ² = 1`.
    pub spectrum: Vec<f64>,
    /// `Σ Λ²` before normalization (`⟨ψ|ψ⟩`, 1 for isometric models).
    pub norm_sq: f64,
    /// `S = −Σ Λ² ln Λ²`.
    pub entropy: f64,
}

/// Schmidt spectrum of `Ψ|yes⟩` across `cut`, read off the top tensor.
pub fn entanglement_spectrum(model: &TtnModel, cut: Cut) -> Result<EntanglementSpectrum> {
    model.check_isometric(SPECTRUM_ISOMETRY_TOL)?;
    let top = model.top();
    let down = top.shape()[1];
    let row = &top.data()[YES * down.pow(4)..(YES + 1) * down.pow(4)];
    let m = DenseTensor::new(vec![down; 4], row.to_vec())?;
    let matrix = reshape_group(&m, &cut.groups())?;
    let dec = svd(&matrix, &[0])?;
    let norm_sq: f64 = dec.s.iter().map(|s| s * s).sum();
    if norm_sq.is_nan() || norm_sq <= 0.0 {
        return Err(Error::NumericDomain("class state has zero norm".into()));
    }
    let spectrum: Vec<f64> = dec.s.iter().map(|s| s / norm_sq.sqrt()).collect();
    let entropy = spectrum
        .iter()
        .map(|l| l * l)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    Ok(EntanglementSpectrum {
        cut,
        spectrum,
        norm_sq,
        entropy,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntanglementRow {
    pub class: usize,
    pub chi: usize,
    pub up_down: EntanglementSpectrum,
    pub left_right: EntanglementSpectrum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntanglementReport {
    pub rows: Vec<EntanglementRow>,
}

impl EntanglementReport {
    /// `class,chi,cut,entropy,norm_sq,spectrum` with the spectrum
    /// `;`-separated.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "class,chi,cut,entropy,norm_sq,spectrum")?;
        for r in &self.rows {
            for s in [&r.up_down, &r.left_right] {
                let spec: Vec<String> = s.spectrum.iter().map(|x| fmt_real(*x)).collect();
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    r.class,
                    r.chi,
                    s.cut,
                    fmt_real(s.entropy),
                    fmt_real(s.norm_sq),
                    spec.join(";")
                )?;
            }
        }
        Ok(())
    }
}

/// Both cuts for every class model. Works for a single model as well.
pub fn entanglement_report(ensemble: &Ensemble) -> Result<EntanglementReport> {
    let rows = par::map(
        ensemble.models(),
        |m| -> Result<(EntanglementSpectrum, EntanglementSpectrum)> {
            Ok((
                entanglement_spectrum(m, Cut::UpDown)?,
                entanglement_spectrum(m, Cut::LeftRight)?,
            ))
        },
    )
    .into_iter()
    .zip(ensemble.iter())
    .map(|(r, (class, m))| {
        r.map(|(up_down, left_right)| EntanglementRow {
            class,
            chi: m.layout().down_dim(m.layout().num_layers),
            up_down,
            left_right,
        })
    })
    .collect::<Result<Vec<_>>>()?;
    Ok(EntanglementReport { rows })
}
