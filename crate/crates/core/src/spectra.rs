//! Eigenspectra of `H(g)` over a coupling grid, resolved by parity, with
//! dominant-class labels and avoided-crossing detection.
//!
//! Each parity sector is diagonalized separately in a symmetry-adapted basis,
//! so levels of opposite parity never mix even where they cross exactly.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eigen::{dense_lowest, lanczos_lowest, EigenOptions};
use crate::fock::{ClassLabel, FockBasis, SignedPermutation};
use crate::mbham::HamiltonianPair;
use crate::spbands::Parity;
use crate::{Error, Execution, Result};

/// Levels kept per coupling.
pub const DEFAULT_LEVELS: usize = 25;
/// Gaps above this are wide avoided crossings.
pub const WIDE_GAP: f64 = 0.01;

/// Orthonormal basis of one parity sector; each vector touches one basis
/// state or one mirror pair.
#[derive(Debug, Clone)]
pub struct ParitySector {
    pub parity: Parity,
    vectors: Vec<Vec<(usize, f64)>>,
}

impl ParitySector {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// Embeds sector coordinates into the full basis.
    pub fn expand(&self, coeffs: &[f64], full_dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; full_dim];
        for (c, v) in coeffs.iter().zip(&self.vectors) {
            for &(i, a) in v {
                out[i] += c * a;
            }
        }
        out
    }

    /// Projects a full-basis vector onto the sector coordinates.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.vectors
            .iter()
            .map(|v| v.iter().map(|&(i, a)| a * x[i]).sum())
            .collect()
    }
}

/// Even and odd sectors of a signed permutation with `Π² = 1`.
pub fn parity_sectors(parity: &SignedPermutation) -> [ParitySector; 2] {
    let mut even = Vec::new();
    let mut odd = Vec::new();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..parity.dim() {
        let j = parity.target[i];
        let s = parity.sign[i];
        if j == i {
            if s > 0.0 {
                even.push(vec![(i, 1.0)]);
            } else {
                odd.push(vec![(i, 1.0)]);
            }
        } else if i < j {
            even.push(vec![(i, h), (j, s * h)]);
            odd.push(vec![(i, h), (j, -s * h)]);
        }
    }
    [
        ParitySector {
            parity: Parity::Even,
            vectors: even,
        },
        ParitySector {
            parity: Parity::Odd,
            vectors: odd,
        },
    ]
}

/// One eigenstate at one coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub energy: f64,
    pub parity: Parity,
    /// Position among the levels of the same parity (0 = lowest).
    pub sector_index: usize,
    /// Class with the largest summed weight.
    pub class: ClassLabel,
    /// Weights of all classes, in [`ClassLabel::ALL`] order.
    pub class_weights: [f64; 6],
    /// Basis index of the largest single component.
    pub dominant_state: usize,
}

/// Levels of both sectors at one coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GPoint {
    pub g: f64,
    /// `sectors[0]` even, `sectors[1]` odd, ascending.
    pub sectors: [Vec<Level>; 2],
}

impl GPoint {
    /// The lowest `k` levels of both sectors merged in energy order.
    pub fn merged(&self, k: usize) -> Vec<Level> {
        let mut all: Vec<Level> = self.sectors.iter().flatten().cloned().collect();
        all.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        all.truncate(k);
        all
    }
}

/// Parity-resolved eigensolver for `H(g)` on a fixed basis.
pub struct SpectrumSolver<'a> {
    h: &'a HamiltonianPair,
    basis: &'a FockBasis,
    sectors: [ParitySector; 2],
    class_of: Vec<usize>,
    pub levels: usize,
    pub options: EigenOptions,
}

impl<'a> SpectrumSolver<'a> {
    pub fn new(h: &'a HamiltonianPair, basis: &'a FockBasis, parity: &SignedPermutation, levels: usize) -> Self {
        let class_of = (0..basis.dim())
            .map(|i| {
                let label = basis.classify(i).label;
                ClassLabel::ALL.iter().position(|&c| c == label).unwrap()
            })
            .collect();
        SpectrumSolver {
            h,
            basis,
            sectors: parity_sectors(parity),
            class_of,
            levels,
            options: EigenOptions::default(),
        }
    }

    pub fn basis(&self) -> &FockBasis {
        self.basis
    }

    pub fn sector(&self, p: Parity) -> &ParitySector {
        match p {
            Parity::Even => &self.sectors[0],
            Parity::Odd => &self.sectors[1],
        }
    }

    fn sector_apply(&self, s: &ParitySector, g: f64, x: &[f64], y: &mut [f64]) {
        let full = s.expand(x, self.h.dim());
        let mut hx = vec![0.0; self.h.dim()];
        self.h.apply_real(g, &full, &mut hx);
        y.copy_from_slice(&s.project(&hx));
    }

    /// Lowest eigenpairs of one sector as (energies, full-basis vectors).
    pub fn sector_eigen(&self, g: f64, p: Parity, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let s = self.sector(p);
        let d = s.dim();
        let k = k.min(d);
        if k == 0 {
            return Ok((Vec::new(), Vec::new()));
        }
        let pairs = if d <= self.options.dense_threshold || k == d {
            let mut m = DMatrix::zeros(d, d);
            let mut e = vec![0.0; d];
            let mut col = vec![0.0; d];
            for c in 0..d {
                e.iter_mut().for_each(|x| *x = 0.0);
                e[c] = 1.0;
                self.sector_apply(s, g, &e, &mut col);
                m.set_column(c, &nalgebra::DVector::from_column_slice(&col));
            }
            let m = 0.5 * (&m + m.transpose());
            dense_lowest(m, k)?
        } else {
            lanczos_lowest(|x, y| self.sector_apply(s, g, x, y), d, k, &self.options)?
        };
        if let Some(r) = pairs.residuals.iter().find(|r| **r >= self.options.tol) {
            return Err(Error::Eigensolver(format!("residual {r:e} above tolerance")));
        }
        let vectors = (0..k)
            .map(|i| s.expand(&pairs.vector(i), self.h.dim()))
            .collect();
        Ok((pairs.values, vectors))
    }

    /// Sector energies only; used by crossing refinement.
    pub fn sector_energies(&self, g: f64, p: Parity) -> Result<Vec<f64>> {
        self.sector_eigen(g, p, self.levels).map(|(e, _)| e)
    }

    fn describe(&self, energy: f64, parity: Parity, sector_index: usize, v: &[f64]) -> Level {
        let mut class_weights = [0.0; 6];
        let mut dominant_state = 0;
        let mut best = -1.0;
        for (i, x) in v.iter().enumerate() {
            let w = x * x;
            class_weights[self.class_of[i]] += w;
            if w > best {
                best = w;
                dominant_state = i;
            }
        }
        let c = (0..6)
            .max_by(|&a, &b| class_weights[a].total_cmp(&class_weights[b]))
            .unwrap();
        Level {
            energy,
            parity,
            sector_index,
            class: ClassLabel::ALL[c],
            class_weights,
            dominant_state,
        }
    }

    /// Both sectors at one coupling.
    pub fn solve(&self, g: f64) -> Result<GPoint> {
        let mut sectors: [Vec<Level>; 2] = [Vec::new(), Vec::new()];
        for (slot, p) in [Parity::Even, Parity::Odd].into_iter().enumerate() {
            let (e, v) = self.sector_eigen(g, p, self.levels).map_err(|e| e.at_coupling(g))?;
            sectors[slot] = e
                .iter()
                .zip(&v)
                .enumerate()
                .map(|(n, (&en, vec))| self.describe(en, p, n, vec))
                .collect();
        }
        Ok(GPoint { g, sectors })
    }
}

/// Spectra over an ascending coupling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GScan {
    pub levels: usize,
    pub points: Vec<GPoint>,
}

impl GScan {
    pub fn g_grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.g).collect()
    }

    /// Index of the grid point closest to `g`.
    pub fn nearest(&self, g: f64) -> usize {
        self.points
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.g - g).abs().total_cmp(&(b.1.g - g).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Largest change of any merged level between neighbouring points,
    /// divided by the step; bounded by `‖W‖`.
    pub fn max_level_slope(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let a = w[0].merged(self.levels);
                let b = w[1].merged(self.levels);
                let dg = w[1].g - w[0].g;
                a.iter()
                    .zip(&b)
                    .map(|(x, y)| (y.energy - x.energy).abs() / dg)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `g, E_1..E_K, parity_1..parity_K, class_1..class_K`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let k = self.levels;
        let mut header = vec!["g".to_string()];
        header.extend((1..=k).map(|i| format!("E_{i}")));
        header.extend((1..=k).map(|i| format!("parity_{i}")));
        header.extend((1..=k).map(|i| format!("class_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for p in &self.points {
            let lv = p.merged(k);
            let mut row = vec![p.g.to_string()];
            row.extend(lv.iter().map(|l| l.energy.to_string()));
            row.extend(lv.iter().map(|l| l.parity.as_str().to_string()));
            row.extend(lv.iter().map(|l| l.class.as_str().to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Solves every grid point; parallel over `g` when requested.
pub fn scan_g(solver: &SpectrumSolver<'_>, g_grid: &[f64], exec: Execution) -> Result<GScan> {
    if g_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("g grid must be strictly ascending".into()));
    }
    let points = exec
        .map(g_grid, |&g| solver.solve(g))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(GScan {
        levels: solver.levels,
        points,
    })
}

/// Uniform grid `start, start + step, ..., ≤ end`.
pub fn uniform_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingKind {
    Wide,
    Narrow,
}

impl CrossingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CrossingKind::Wide => "wide",
            CrossingKind::Narrow => "narrow",
        }
    }
}

/// A local minimum of the gap between neighbouring same-parity levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidedCrossing {
    pub parity: Parity,
    /// Sector indices `(n, n + 1)` of the two levels.
    pub pair: (usize, usize),
    pub g_star: f64,
    /// Full minimal gap.
    pub delta_e: f64,
    pub kind: CrossingKind,
    /// Dominant class of the lower level left of the minimum.
    pub class_left: ClassLabel,
    /// Dominant class of the lower level right of the minimum.
    pub class_right: ClassLabel,
    /// Dominant classes of the upper level left and right of the minimum.
    pub upper_left: ClassLabel,
    pub upper_right: ClassLabel,
}

impl AvoidedCrossing {
    /// Whether any of the four recorded classes matches.
    pub fn involves(&self, class: ClassLabel) -> bool {
        [self.class_left, self.class_right, self.upper_left, self.upper_right].contains(&class)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub crossings: Vec<AvoidedCrossing>,
    /// Minima sitting on the edge of the grid, which cannot be bracketed.
    pub warnings: Vec<String>,
}

impl CrossingReport {
    pub fn wide(&self) -> impl Iterator<Item = &AvoidedCrossing> {
        self.crossings.iter().filter(|c| c.kind == CrossingKind::Wide)
    }

    /// CSV with columns `pair, g_star, delta_E, kind, class_left, class_right`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "parity,pair,g_star,delta_E,kind,class_left,class_right")?;
        for c in &self.crossings {
            writeln!(
                out,
                "{},{}-{},{},{},{},{},{}",
                c.parity.as_str(),
                c.pair.0 + 1,
                c.pair.1 + 1,
                c.g_star,
                c.delta_e,
                c.kind.as_str(),
                c.class_left,
                c.class_right
            )?;
        }
        Ok(())
    }
}

/// Re-solves one sector at a given coupling; used to refine gap minima.
pub type Refiner<'r> = &'r (dyn Fn(f64, Parity) -> Result<Vec<f64>> + Sync);

const GOLDEN_TOL: f64 = 1e-6;
const GOLDEN_MAX_ITER: usize = 200;

fn golden_minimum(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..GOLDEN_MAX_ITER {
        if (b - a).abs() < GOLDEN_TOL {
            let x = 0.5 * (a + b);
            return Ok((x, f(x)?));
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Err(Error::NoConvergence(format!(
        "golden-section search on [{a}, {b}] did not converge"
    )))
}

/// Finds local gap minima for every neighbouring same-parity pair whose
/// upper level lies among the scan's merged levels. With a refiner the
/// minimum is polished by golden-section search inside its bracket;
/// otherwise the grid value is reported.
pub fn detect_crossings(scan: &GScan, refine: Option<Refiner<'_>>) -> Result<CrossingReport> {
    let mut report = CrossingReport::default();
    let n = scan.points.len();
    if n < 3 {
        return Ok(report);
    }
    for (slot, parity) in [Parity::Even, Parity::Odd].into_iter().enumerate() {
        let depth = scan.points.iter().map(|p| p.sectors[slot].len()).min().unwrap_or(0);
        for lower in 0..depth.saturating_sub(1) {
            let gap: Vec<f64> = scan
                .points
                .iter()
                .map(|p| p.sectors[slot][lower + 1].energy - p.sectors[slot][lower].energy)
                .collect();
            for k in 0..n {
                let left = if k > 0 { gap[k - 1] } else { f64::INFINITY };
                let right = if k + 1 < n { gap[k + 1] } else { f64::INFINITY };
                if !(gap[k] < left && gap[k] <= right) {
                    continue;
                }
                // Only pairs visible in the merged spectrum.
                let top = scan.points[k].merged(scan.levels);
                let upper = &scan.points[k].sectors[slot][lower + 1];
                if !top.iter().any(|l| l.parity == parity && l.sector_index == upper.sector_index) {
                    continue;
                }
                if k == 0 || k + 1 == n {
                    report.warnings.push(format!(
                        "{} pair {}-{}: gap minimum at grid edge g = {}",
                        parity.as_str(),
                        lower + 1,
                        lower + 2,
                        scan.points[k].g
                    ));
                    continue;
                }
                let (g_star, delta_e) = match refine {
                    Some(solve) => {
                        let f = |g: f64| -> Result<f64> {
                            let e = solve(g, parity)?;
                            if e.len() <= lower + 1 {
                                return Err(Error::Eigensolver(format!(
                                    "refinement returned {} levels",
                                    e.len()
                                )));
                            }
                            Ok(e[lower + 1] - e[lower])
                        };
                        golden_minimum(f, scan.points[k - 1].g, scan.points[k + 1].g)?
                    }
                    None => (scan.points[k].g, gap[k]),
                };
                let at = |i: usize, j: usize| scan.points[i].sectors[slot][j].class;
                report.crossings.push(AvoidedCrossing {
                    parity,
                    pair: (lower, lower + 1),
                    g_star,
                    delta_e: delta_e.max(0.0),
                    kind: if delta_e > WIDE_GAP {
                        CrossingKind::Wide
                    } else {
                        CrossingKind::Narrow
                    },
                    class_left: at(k - 1, lower),
                    class_right: at(k + 1, lower),
                    upper_left: at(k - 1, lower + 1),
                    upper_right: at(k + 1, lower + 1),
                });
            }
        }
    }
    report
        .crossings
        .sort_by(|a, b| a.g_star.total_cmp(&b.g_star));
    Ok(report)
}

/// Dominant classes of the lowest-band levels (S, SP, T) in energy order.
pub fn lowest_band_sequence(point: &GPoint, k: usize) -> Vec<ClassLabel> {
    point
        .merged(k)
        .into_iter()
        .map(|l| l.class)
        .filter(|c| c.is_lowest_band())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(energy: f64, parity: Parity, n: usize, class: ClassLabel) -> Level {
        Level {
            energy,
            parity,
            sector_index: n,
            class,
            class_weights: [0.0; 6],
            dominant_state: 0,
        }
    }

    /// Two even levels `±sqrt(g² + Δ²)` plus an odd level crossing them.
    fn synthetic(delta: f64, grid: &[f64]) -> GScan {
        let points = grid
            .iter()
            .map(|&g| {
                let e = (g * g + delta * delta).sqrt();
                let (cl, cu) = if g < 0.0 {
                    (ClassLabel::T, ClassLabel::SE)
                } else {
                    (ClassLabel::SE, ClassLabel::T)
                };
                GPoint {
                    g,
                    sectors: [
                        vec![level(-e, Parity::Even, 0, cl), level(e, Parity::Even, 1, cu)],
                        vec![level(0.5 * g, Parity::Odd, 0, ClassLabel::S)],
                    ],
                }
            })
            .collect();
        GScan { levels: 3, points }
    }

    #[test]
    fn two_level_gap_is_twice_the_coupling() {
        let grid = uniform_grid(-1.03, 1.0, 0.05);
        let scan = synthetic(0.05, &grid);
        let exact = |delta: f64| {
            move |g: f64, p: Parity| -> Result<Vec<f64>> {
                let e = (g * g + delta * delta).sqrt();
                Ok(match p {
                    Parity::Even => vec![-e, e],
                    Parity::Odd => vec![0.5 * g],
                })
            }
        };
        let report = detect_crossings(&scan, Some(&exact(0.05))).unwrap();
        assert_eq!(report.crossings.len(), 1);
        let c = &report.crossings[0];
        assert!((c.delta_e - 0.1).abs() < 1e-9);
        assert!(c.g_star.abs() < 1e-5);
        assert_eq!(c.kind, CrossingKind::Wide);
        assert_eq!(c.class_left, ClassLabel::T);
        assert_eq!(c.class_right, ClassLabel::SE);
        assert!(c.involves(ClassLabel::T) && c.involves(ClassLabel::SE));

        // The grid alone overestimates a narrow gap; refinement resolves it.
        let narrow = synthetic(0.002, &grid);
        let coarse = detect_crossings(&narrow, None).unwrap();
        assert_eq!(coarse.crossings[0].kind, CrossingKind::Wide);
        let r = detect_crossings(&narrow, Some(&exact(0.002))).unwrap();
        assert_eq!(r.crossings[0].kind, CrossingKind::Narrow);
        assert!((r.crossings[0].delta_e - 0.004).abs() < 1e-9);
    }

    #[test]
    fn opposite_parity_crossings_are_ignored() {
        // Odd level passes straight through the even pair: no odd partner.
        let grid = uniform_grid(-1.03, 1.0, 0.05);
        let scan = synthetic(0.05, &grid);
        let report = detect_crossings(&scan, None).unwrap();
        assert!(report.crossings.iter().all(|c| c.parity == Parity::Even));
    }

    #[test]
    fn edge_minimum_is_warned() {
        let grid = uniform_grid(0.0, 1.0, 0.05);
        let scan = synthetic(0.05, &grid);
        let report = detect_crossings(&scan, None).unwrap();
        assert!(report.crossings.is_empty());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, f) = golden_minimum(|x| Ok((x - 0.3).powi(2) + 1.0), 0.0, 1.0).unwrap();
        assert!((x - 0.3).abs() < 1e-6);
        assert!((f - 1.0).abs() < 1e-11);
    }

    #[test]
    fn sectors_are_orthonormal_and_complete() {
        let p = SignedPermutation {
            target: vec![2, 1, 0, 3],
            sign: vec![1.0, -1.0, 1.0, 1.0],
        };
        let [even, odd] = parity_sectors(&p);
        assert_eq!(even.dim() + odd.dim(), 4);
        assert_eq!(odd.dim(), 2);
        for s in [&even, &odd] {
            for a in 0..s.dim() {
                let mut e = vec![0.0; s.dim()];
                e[a] = 1.0;
                let full = s.expand(&e, 4);
                let back = s.project(&full);
                for (b, x) in back.iter().enumerate() {
                    assert!((x - if a == b { 1.0 } else { 0.0 }).abs() < 1e-15);
                }
                // Eigenvector of the permutation with the sector's sign.
                let image = p.apply(&full);
                for (u, v) in image.iter().zip(&full) {
                    assert!((u - s.parity.sign() * v).abs() < 1e-15);
                }
            }
        }
    }
}
