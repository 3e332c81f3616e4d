//! Bosonic number states over `(band, site)` orbitals.
//!
//! States are ordered lexicographically (ascending) on their occupation
//! vectors, with orbitals sorted by band and then by site. Ranking uses the
//! hockey-stick identity so `rank` and `unrank` are `O(n_orb)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::spbands::WannierSet;
use crate::{Error, Result};

/// Largest basis we agree to enumerate.
pub const MAX_DIMENSION: u128 = 50_000_000;

/// One single-particle mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Orbital {
    pub band: usize,
    pub site: usize,
}

impl Orbital {
    pub fn new(band: usize, site: usize) -> Self {
        Orbital { band, site }
    }
}

/// The `(band, site)` list for bands `0..n_bands` on `m_wells` sites.
pub fn lattice_orbitals(n_bands: usize, m_wells: usize) -> Vec<Orbital> {
    (0..n_bands)
        .flat_map(|b| (0..m_wells).map(move |s| Orbital::new(b, s)))
        .collect()
}

/// Occupation numbers, one per orbital.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NumberState(pub Vec<u8>);

impl NumberState {
    pub fn particles(&self) -> usize {
        self.0.iter().map(|&n| n as usize).sum()
    }

    pub fn occupations(&self) -> &[u8] {
        &self.0
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// `C(N + n_orb - 1, N)`.
pub fn basis_dimension(n_particles: usize, n_orb: usize) -> u128 {
    if n_orb == 0 {
        return 0;
    }
    binomial((n_particles + n_orb - 1) as u128, n_particles as u128)
}

/// All `N`-boson number states over a fixed orbital list.
#[derive(Debug, Clone)]
pub struct FockBasis {
    n_particles: usize,
    orbitals: Vec<Orbital>,
    m_wells: usize,
    /// Flat `dim × n_orb` occupation table.
    occupations: Vec<u8>,
    /// `binom[r][k] = C(k + r, r)`: states of `k` particles over `r + 1` modes
    /// is `binom[r][k]`; padded for the hockey-stick sums.
    binom: Vec<Vec<usize>>,
}

impl FockBasis {
    pub fn dim(&self) -> usize {
        self.occupations.len() / self.orbitals.len()
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn n_orbitals(&self) -> usize {
        self.orbitals.len()
    }

    pub fn orbitals(&self) -> &[Orbital] {
        &self.orbitals
    }

    pub fn m_wells(&self) -> usize {
        self.m_wells
    }

    /// Occupations of basis state `i`.
    pub fn state(&self, i: usize) -> &[u8] {
        let n = self.orbitals.len();
        &self.occupations[i * n..(i + 1) * n]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u8]> {
        self.occupations.chunks_exact(self.orbitals.len())
    }

    pub fn orbital_index(&self, orbital: Orbital) -> Option<usize> {
        self.orbitals.iter().position(|&o| o == orbital)
    }

    /// Number of states of `k` particles over `modes` orbitals.
    fn count(&self, k: usize, modes: usize) -> usize {
        if modes == 0 {
            return usize::from(k == 0);
        }
        self.binom[modes - 1][k]
    }

    /// `Σ_{v < n} count(R - v, r)` = `C(R + r, r) - C(R - n + r, r)`.
    fn below(&self, remaining: usize, n: usize, r: usize) -> usize {
        // count(k, r) = C(k + r - 1, r - 1); the partial sum telescopes into
        // counts over r + 1 modes.
        self.count(remaining, r + 1) - self.count(remaining - n, r + 1)
    }

    /// Index of an occupation vector, or `None` if it is not in the basis.
    pub fn rank(&self, occ: &[u8]) -> Option<usize> {
        let n_orb = self.orbitals.len();
        if occ.len() != n_orb || occ.iter().map(|&x| x as usize).sum::<usize>() != self.n_particles
        {
            return None;
        }
        let mut remaining = self.n_particles;
        let mut idx = 0usize;
        for (p, &n) in occ.iter().enumerate().take(n_orb - 1) {
            let n = n as usize;
            let r = n_orb - 1 - p;
            idx += self.below(remaining, n, r);
            remaining -= n;
        }
        Some(idx)
    }

    /// Occupations of the state with index `i`, computed combinatorially.
    pub fn unrank(&self, mut i: usize) -> Option<Vec<u8>> {
        if i >= self.dim() {
            return None;
        }
        let n_orb = self.orbitals.len();
        let mut occ = vec![0u8; n_orb];
        let mut remaining = self.n_particles;
        for p in 0..n_orb - 1 {
            let r = n_orb - 1 - p;
            let mut n = 0;
            // Largest n with below(remaining, n, r) <= i.
            while n < remaining && self.below(remaining, n + 1, r) <= i {
                n += 1;
            }
            i -= self.below(remaining, n, r);
            occ[p] = n as u8;
            remaining -= n;
        }
        occ[n_orb - 1] = remaining as u8;
        Some(occ)
    }

    /// Energetic class of state `i`.
    pub fn classify(&self, i: usize) -> ClassTag {
        classify_state(self.state(i), &self.orbitals, self.m_wells)
    }

    /// Indices of states with no particle outside band 0.
    pub fn band_zero_states(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| {
                self.state(i)
                    .iter()
                    .zip(&self.orbitals)
                    .all(|(&n, o)| n == 0 || o.band == 0)
            })
            .collect()
    }

    /// Ket label of state `i` (see [`format_ket`]).
    pub fn label(&self, i: usize) -> String {
        format_ket(self.state(i), &self.orbitals, self.m_wells)
    }
}

/// Enumerates every `n_particles`-boson state over `orbitals`.
pub fn enumerate_basis(
    n_particles: usize,
    orbitals: &[Orbital],
    m_wells: usize,
) -> Result<FockBasis> {
    if n_particles == 0 || orbitals.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one particle and one orbital".into(),
        ));
    }
    if n_particles > u8::MAX as usize {
        return Err(Error::InvalidParameter(format!(
            "{n_particles} particles exceed the occupation range"
        )));
    }
    let mut sorted = orbitals.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != orbitals.len() {
        return Err(Error::InvalidParameter("duplicate orbitals".into()));
    }
    if let Some(o) = sorted.iter().find(|o| o.site >= m_wells) {
        return Err(Error::InvalidParameter(format!(
            "orbital site {} outside {m_wells} wells",
            o.site
        )));
    }
    let n_orb = sorted.len();
    let dim = basis_dimension(n_particles, n_orb);
    if dim > MAX_DIMENSION {
        return Err(Error::DimensionOverflow {
            dimension: dim,
            limit: MAX_DIMENSION,
        });
    }
    let dim = dim as usize;

    let binom: Vec<Vec<usize>> = (0..=n_orb)
        .map(|r| {
            (0..=n_particles)
                .map(|k| binomial((k + r) as u128, r as u128) as usize)
                .collect()
        })
        .collect();

    // Ascending lexicographic enumeration: start at (0,..,0,N), advance like an
    // odometer that keeps the particle number fixed.
    let mut occupations = Vec::with_capacity(dim * n_orb);
    let mut cur = vec![0u8; n_orb];
    cur[n_orb - 1] = n_particles as u8;
    loop {
        occupations.extend_from_slice(&cur);
        // Find the rightmost position p < n_orb - 1 that can be incremented,
        // i.e. with particles to its right.
        let mut tail = cur[n_orb - 1] as usize;
        let mut p = n_orb - 1;
        let mut advanced = false;
        while p > 0 {
            p -= 1;
            if tail > 0 {
                cur[p] += 1;
                let rest = tail - 1;
                for q in cur.iter_mut().skip(p + 1) {
                    *q = 0;
                }
                cur[n_orb - 1] = rest as u8;
                advanced = true;
                break;
            }
            tail += cur[p] as usize;
        }
        if !advanced {
            break;
        }
    }
    debug_assert_eq!(occupations.len(), dim * n_orb);

    Ok(FockBasis {
        n_particles,
        orbitals: sorted,
        m_wells,
        occupations,
        binom,
    })
}

/// Class labels of number states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    /// Unit occupancy everywhere, lowest band.
    S,
    /// One doubly occupied site, lowest band.
    SP,
    /// One triply occupied site, lowest band.
    T,
    /// Unit occupancy with one first-band quantum.
    SE,
    /// One doubly occupied site with one first-band quantum.
    HE,
    Other,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 6] = [
        ClassLabel::S,
        ClassLabel::SP,
        ClassLabel::T,
        ClassLabel::SE,
        ClassLabel::HE,
        ClassLabel::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::S => "S",
            ClassLabel::SP => "SP",
            ClassLabel::T => "T",
            ClassLabel::SE => "SE",
            ClassLabel::HE => "HE",
            ClassLabel::Other => "OTHER",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ClassLabel::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
    }

    /// Classes without any higher-band quantum.
    pub fn is_lowest_band(self) -> bool {
        matches!(self, ClassLabel::S | ClassLabel::SP | ClassLabel::T)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Generic description of a number state: site occupancies (descending) and
/// total excitation quanta `Σ n · band`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GenericKey {
    pub site_occupancy: Vec<u8>,
    pub quanta: usize,
}

impl fmt::Display for GenericKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let occ: Vec<String> = self.site_occupancy.iter().map(|n| n.to_string()).collect();
        write!(f, "{{{}}}q{}", occ.join(""), self.quanta)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassTag {
    pub label: ClassLabel,
    pub key: GenericKey,
}

/// Classifies an occupation vector into S / SP / T / SE / HE / OTHER.
pub fn classify_state(occ: &[u8], orbitals: &[Orbital], m_wells: usize) -> ClassTag {
    let mut per_site = vec![0u8; m_wells];
    let mut quanta = 0usize;
    let mut max_band = 0usize;
    for (&n, o) in occ.iter().zip(orbitals) {
        if n == 0 {
            continue;
        }
        per_site[o.site] += n;
        quanta += n as usize * o.band;
        max_band = max_band.max(o.band);
    }
    let mut site_occupancy = per_site.clone();
    site_occupancy.sort_unstable_by(|a, b| b.cmp(a));

    let count = |v: u8| per_site.iter().filter(|&&n| n == v).count();
    let singles_only = per_site.iter().all(|&n| n == 1);
    let one_peak = |v: u8| count(v) == 1 && per_site.iter().all(|&n| n <= 1 || n == v);

    let label = match (quanta, max_band) {
        (0, _) if singles_only => ClassLabel::S,
        (0, _) if one_peak(2) => ClassLabel::SP,
        (0, _) if one_peak(3) => ClassLabel::T,
        (1, 1) if singles_only => ClassLabel::SE,
        (1, 1) if one_peak(2) => ClassLabel::HE,
        _ => ClassLabel::Other,
    };
    ClassTag {
        label,
        key: GenericKey {
            site_occupancy,
            quanta,
        },
    }
}

/// Ket notation: sites separated by commas; band-`b` occupation `n` written
/// `n^{(b)}` for `b > 0`; several bands on one site joined by `⊗`.
///
/// `|1,1^{(1)},1⟩` is written `1,1^{(1)},1`.
pub fn format_ket(occ: &[u8], orbitals: &[Orbital], m_wells: usize) -> String {
    let mut sites: Vec<Vec<(usize, u8)>> = vec![Vec::new(); m_wells];
    for (&n, o) in occ.iter().zip(orbitals) {
        if n > 0 {
            sites[o.site].push((o.band, n));
        }
    }
    sites
        .into_iter()
        .map(|mut parts| {
            if parts.is_empty() {
                return "0".to_string();
            }
            parts.sort();
            parts
                .into_iter()
                .map(|(b, n)| {
                    if b == 0 {
                        n.to_string()
                    } else {
                        format!("{n}^{{({b})}}")
                    }
                })
                .collect::<Vec<_>>()
                .join("⊗")
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// Parses ket notation produced by [`format_ket`] (ASCII `x` also accepted
/// in place of `⊗`; surrounding `|` and `⟩`/`>` are ignored).
pub fn parse_ket(text: &str, orbitals: &[Orbital], m_wells: usize) -> Result<Vec<u8>> {
    let trimmed = text
        .trim()
        .trim_start_matches('|')
        .trim_end_matches('⟩')
        .trim_end_matches('>');
    let sites: Vec<&str> = trimmed.split(',').collect();
    if sites.len() != m_wells {
        return Err(Error::UnknownTarget(format!(
            "'{text}' has {} sites, expected {m_wells}",
            sites.len()
        )));
    }
    let mut occ = vec![0u8; orbitals.len()];
    for (site, part) in sites.iter().enumerate() {
        for piece in part.split(['⊗', 'x']) {
            let piece = piece.trim();
            let (count, band) = match piece.split_once("^{(") {
                Some((n, rest)) => {
                    let b = rest.trim_end_matches(")}");
                    (n, b.parse::<usize>().ok())
                }
                None => (piece, Some(0)),
            };
            let n: u8 = count
                .parse()
                .map_err(|_| Error::UnknownTarget(format!("bad occupation '{piece}' in '{text}'")))?;
            let band =
                band.ok_or_else(|| Error::UnknownTarget(format!("bad band in '{piece}'")))?;
            if n == 0 {
                continue;
            }
            let idx = orbitals
                .iter()
                .position(|o| o.band == band && o.site == site)
                .ok_or_else(|| {
                    Error::UnknownTarget(format!("orbital (band {band}, site {}) not in basis", site + 1))
                })?;
            occ[idx] += n;
        }
    }
    Ok(occ)
}

/// Basis permutation with signs realizing the reflection `x -> -x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPermutation {
    pub target: Vec<usize>,
    pub sign: Vec<f64>,
}

impl SignedPermutation {
    pub fn dim(&self) -> usize {
        self.target.len()
    }

    /// `y = Π x`.
    pub fn apply<T>(&self, x: &[T]) -> Vec<T>
    where
        T: Copy + Default + std::ops::Mul<f64, Output = T>,
    {
        let mut y = vec![T::default(); x.len()];
        for (i, &xi) in x.iter().enumerate() {
            y[self.target[i]] = xi * self.sign[i];
        }
        y
    }

    /// `Π ∘ Π`, expected to be the identity with sign +1.
    pub fn squared(&self) -> SignedPermutation {
        let n = self.dim();
        let mut target = vec![0; n];
        let mut sign = vec![0.0; n];
        for i in 0..n {
            let j = self.target[i];
            target[i] = self.target[j];
            sign[i] = self.sign[i] * self.sign[j];
        }
        SignedPermutation { target, sign }
    }

    pub fn is_identity(&self) -> bool {
        self.target.iter().enumerate().all(|(i, &t)| i == t) && self.sign.iter().all(|&s| s == 1.0)
    }
}

/// Reflection as a signed permutation on the basis.
pub fn parity_map(basis: &FockBasis, wannier: &WannierSet) -> Result<SignedPermutation> {
    let m = basis.m_wells();
    let orbitals = basis.orbitals();
    let mut mirror = Vec::with_capacity(orbitals.len());
    let mut phase = Vec::with_capacity(orbitals.len());
    for o in orbitals {
        let image = Orbital::new(o.band, m - 1 - o.site);
        let j = basis.orbital_index(image).ok_or_else(|| {
            Error::NotMirrorClosed(format!("mirror of (band {}, site {}) missing", o.band, o.site + 1))
        })?;
        let w = wannier
            .orbitals
            .iter()
            .find(|w| w.band == o.band && w.site == o.site)
            .ok_or_else(|| {
                Error::NotMirrorClosed(format!(
                    "no Wannier orbital for (band {}, site {})",
                    o.band,
                    o.site + 1
                ))
            })?;
        mirror.push(j);
        phase.push(w.parity_phase);
    }
    let mut target = Vec::with_capacity(basis.dim());
    let mut sign = Vec::with_capacity(basis.dim());
    let mut image = vec![0u8; orbitals.len()];
    for occ in basis.states() {
        image.iter_mut().for_each(|x| *x = 0);
        let mut s = 1.0;
        for (k, &n) in occ.iter().enumerate() {
            image[mirror[k]] = n;
            if n % 2 == 1 {
                s *= phase[k];
            }
        }
        target.push(basis.rank(&image).expect("mirror image lies in the basis"));
        sign.push(s);
    }
    Ok(SignedPermutation { target, sign })
}
