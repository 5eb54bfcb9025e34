//! Minutia recovery accounting, an alignment-search minutia matcher and CMC
//! curves.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::minutia::{Minutia, MinutiaSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchTolerance {
    /// Maximum Euclidean distance in pixels.
    pub loc_radius: f64,
    /// Maximum angular difference in radians (mod 2π).
    pub angle_tol: f64,
    pub require_type: bool,
}

impl Default for MatchTolerance {
    fn default() -> Self {
        Self {
            loc_radius: 15.0,
            angle_tol: PI / 6.0,
            require_type: true,
        }
    }
}

impl MatchTolerance {
    pub fn validate(&self) -> Result<()> {
        if !(self.loc_radius >= 0.0 && self.angle_tol >= 0.0) {
            return Err(Error::InvalidParameter(
                "match tolerances must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Smallest difference between two directions (mod 2π).
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn compatible(a: &Minutia, b: &Minutia, tol: &MatchTolerance) -> Option<f64> {
    if tol.require_type && a.kind != b.kind {
        return None;
    }
    let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
    (d <= tol.loc_radius && angle_difference(a.angle, b.angle) <= tol.angle_tol).then_some(d)
}

/// Greedy one-to-one pairing: admissible pairs are taken in order of
/// increasing distance (ties by index) while both ends are free.
pub fn greedy_pairs(a: &[Minutia], b: &[Minutia], tol: &MatchTolerance) -> Vec<(usize, usize)> {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            if let Some(d) = compatible(p, q, tol) {
                cand.push((d, i, j));
            }
        }
    }
    cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut out = Vec::new();
    for (_, i, j) in cand {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// One row of a recovery report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryRow {
    pub name: String,
    pub extracted: usize,
    pub genuine: usize,
    pub recovered_genuine: usize,
    pub introduced_fake: usize,
}

pub fn match_minutiae(
    extracted: &MinutiaSet,
    genuine: &MinutiaSet,
    tol: &MatchTolerance,
) -> RecoveryRow {
    let pairs = greedy_pairs(extracted.items(), genuine.items(), tol);
    RecoveryRow {
        name: String::new(),
        extracted: extracted.len(),
        genuine: genuine.len(),
        recovered_genuine: pairs.len(),
        introduced_fake: extracted.len() - pairs.len(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecoveryReport {
    pub rows: Vec<RecoveryRow>,
}

impl RecoveryReport {
    pub fn push(&mut self, name: impl Into<String>, mut row: RecoveryRow) {
        row.name = name.into();
        self.rows.push(row);
    }

    pub fn recovered_genuine(&self) -> usize {
        self.rows.iter().map(|r| r.recovered_genuine).sum()
    }

    pub fn introduced_fake(&self) -> usize {
        self.rows.iter().map(|r| r.introduced_fake).sum()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("image\textracted\tgenuine\trecovered_genuine\tintroduced_fake\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                r.name, r.extracted, r.genuine, r.recovered_genuine, r.introduced_fake
            );
        }
        let ex: usize = self.rows.iter().map(|r| r.extracted).sum();
        let ge: usize = self.rows.iter().map(|r| r.genuine).sum();
        let _ = writeln!(
            s,
            "TOTAL\t{ex}\t{ge}\t{}\t{}",
            self.recovered_genuine(),
            self.introduced_fake()
        );
        s
    }
}

/// Alignment search grid for [`similarity_score`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatcherConfig {
    pub max_rotation_deg: f64,
    pub rotation_step_deg: f64,
    pub tolerance: MatchTolerance,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 30.0,
            rotation_step_deg: 2.0,
            tolerance: MatchTolerance::default(),
        }
    }
}

/// Best matched-pair count over rotations on a grid and the translations
/// implied by anchoring each compatible probe/gallery pair, normalised by
/// `√(|probe|·|gallery|)`. Empty sets score 0.
pub fn similarity_score(probe: &MinutiaSet, gallery: &MinutiaSet, cfg: &MatcherConfig) -> f64 {
    let (p, g) = (probe.items(), gallery.items());
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let tol = &cfg.tolerance;
    let steps = (cfg.max_rotation_deg / cfg.rotation_step_deg).floor() as i64;
    let mut best = 0usize;
    let mut moved = p.to_vec();
    for step in -steps..=steps {
        let rho = (step as f64 * cfg.rotation_step_deg).to_radians();
        let (s, c) = rho.sin_cos();
        let rotated: Vec<Minutia> = p
            .iter()
            .map(|m| Minutia::new(c * m.x - s * m.y, s * m.x + c * m.y, m.angle + rho, m.kind))
            .collect();
        for a in &rotated {
            for b in g {
                if tol.require_type && a.kind != b.kind {
                    continue;
                }
                if angle_difference(a.angle, b.angle) > tol.angle_tol {
                    continue;
                }
                let (tx, ty) = (b.x - a.x, b.y - a.y);
                for (dst, src) in moved.iter_mut().zip(&rotated) {
                    *dst = Minutia { x: src.x + tx, y: src.y + ty, ..*src };
                }
                best = best.max(greedy_pairs(&moved, g, tol).len());
                if best == p.len().min(g.len()) {
                    return best as f64 / ((p.len() * g.len()) as f64).sqrt();
                }
            }
        }
    }
    best as f64 / ((p.len() * g.len()) as f64).sqrt()
}

/// Probe-by-gallery similarity scores with the index of each probe's mate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    probes: usize,
    gallery: usize,
    scores: Vec<f64>,
    true_mate: Vec<usize>,
}

impl ScoreMatrix {
    pub fn new(probes: usize, gallery: usize, scores: Vec<f64>, true_mate: Vec<usize>) -> Result<Self> {
        if scores.len() != probes * gallery {
            return Err(Error::DimensionMismatch {
                expected: (gallery, probes),
                actual: (scores.len(), 1),
            });
        }
        if true_mate.len() != probes {
            return Err(Error::InvalidParameter(format!(
                "{} true-mate indices for {probes} probes",
                true_mate.len()
            )));
        }
        if let Some(&bad) = true_mate.iter().find(|&&t| t >= gallery) {
            return Err(Error::InvalidParameter(format!(
                "true mate {bad} outside a gallery of {gallery}"
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("scores must be finite".into()));
        }
        Ok(Self {
            probes,
            gallery,
            scores,
            true_mate,
        })
    }

    pub fn probes(&self) -> usize {
        self.probes
    }

    pub fn gallery(&self) -> usize {
        self.gallery
    }

    pub fn score(&self, probe: usize, item: usize) -> f64 {
        self.scores[probe * self.gallery + item]
    }

    pub fn true_mate(&self, probe: usize) -> usize {
        self.true_mate[probe]
    }

    /// 1-based rank of the true mate: higher scores first, ties by gallery index.
    pub fn mate_rank(&self, probe: usize) -> usize {
        let t = self.true_mate[probe];
        let st = self.score(probe, t);
        1 + (0..self.gallery)
            .filter(|&j| {
                let s = self.score(probe, j);
                s > st || (s == st && j < t)
            })
            .count()
    }
}

pub fn score_matrix(
    probes: &[MinutiaSet],
    gallery: &[MinutiaSet],
    true_mate: Vec<usize>,
    cfg: &MatcherConfig,
) -> Result<ScoreMatrix> {
    let scores: Vec<f64> = (0..probes.len() * gallery.len())
        .into_par_iter()
        .map(|k| similarity_score(&probes[k / gallery.len()], &gallery[k % gallery.len()], cfg))
        .collect();
    ScoreMatrix::new(probes.len(), gallery.len(), scores, true_mate)
}

/// `acc[k-1]` is the fraction of probes whose mate ranks within the top `k`.
pub fn cmc_curve(scores: &ScoreMatrix) -> Vec<f64> {
    let mut hist = vec![0usize; scores.gallery()];
    for p in 0..scores.probes() {
        hist[scores.mate_rank(p) - 1] += 1;
    }
    let n = scores.probes().max(1) as f64;
    let mut acc = 0usize;
    hist.iter()
        .map(|&c| {
            acc += c;
            acc as f64 / n
        })
        .collect()
}

pub fn cmc_to_csv(curve: &[f64]) -> String {
    let mut s = String::from("rank,accuracy\n");
    for (k, a) in curve.iter().enumerate() {
        let _ = writeln!(s, "{},{a}", k + 1);
    }
    s
}
