//! Tables of games: the probabilities that a candidate vehicle at speed class
//! `h`, meeting a field vehicle at class `k`, ends up in class `j`.
//!
//! Indices are zero-based in code. A table for candidate population `p` and
//! field population `q` has `n_p` outcome slices of size `n_p x n_q`; rows are
//! candidate classes, columns field classes. Self tables are the case `p == q`.

use std::io::{self, Write};

use crate::config::SpeedLattice;
use crate::error::ModelError;

/// Tolerance on `sum_j T[j][h][k] = 1`.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Acceleration and braking probabilities at a given occupancy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionProbabilities {
    /// Probability of reaching the best outcome of an interaction.
    pub p: f64,
    /// Braking probability in same-speed encounters.
    pub q: f64,
    /// `1 - p`.
    pub r: f64,
}

impl TransitionProbabilities {
    /// `P = alpha (1 - s^gamma)`, `Q = (1 - alpha) s`.
    pub fn at_occupancy(s: f64, alpha: f64, gamma: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(ModelError::OccupancyOutOfRange(s));
        }
        let p = alpha * (1.0 - s.powf(gamma));
        let q = (1.0 - alpha) * s;
        Ok(Self { p, q, r: 1.0 - p })
    }

    pub fn from_pq(p: f64, q: f64) -> Self {
        Self { p, q, r: 1.0 - p }
    }
}

/// Outcome distribution of one `(h, k)` encounter: at most three classes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcomes(Vec<(usize, f64)>);

impl Outcomes {
    fn push(&mut self, j: usize, prob: f64) {
        if prob != 0.0 {
            match self.0.iter_mut().find(|(jj, _)| *jj == j) {
                Some(slot) => slot.1 += prob,
                None => self.0.push((j, prob)),
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One table of games `T^{pq}`, stored densely with a sparse view per `(h, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionTable {
    candidate_classes: usize,
    field_classes: usize,
    dense: Vec<f64>,
    sparse: Vec<Outcomes>,
}

impl InteractionTable {
    /// Builds the table for candidates on `candidate` meeting field vehicles on `field`.
    ///
    /// Encounter rules, with classes numbered from 0 and `top = n_p - 1`:
    /// - faster field vehicle (`h < k`): stay w.p. `R`, gain one class w.p. `P`;
    ///   a candidate already at `top` meeting a faster vehicle of the other
    ///   population stays w.p. 1;
    /// - slower field vehicle (`h > k`): queue to `k` w.p. `R`, keep `h` w.p. `P`;
    /// - same speed: at the bottom `R` stay / `P` up; in the interior `Q` down,
    ///   `1 - P - Q` stay, `P` up; at `top` `Q` down, `1 - Q` stay.
    pub fn build(
        candidate: &SpeedLattice,
        field: &SpeedLattice,
        probs: TransitionProbabilities,
    ) -> Result<Self, ModelError> {
        if !candidate.nested_with(field) {
            return Err(ModelError::LatticeNesting { candidate: candidate.len(), field: field.len() });
        }
        Self::from_sizes(candidate.len(), field.len(), probs)
    }

    /// Table for lattices given only by class counts; the smaller lattice is
    /// assumed to be a prefix of the larger.
    pub fn from_sizes(n_p: usize, n_q: usize, probs: TransitionProbabilities) -> Result<Self, ModelError> {
        for n in [n_p, n_q] {
            if n < 2 {
                return Err(ModelError::TooFewClasses(n));
            }
        }
        let TransitionProbabilities { p, q, r } = probs;
        let top = n_p - 1;
        let mut sparse = vec![Outcomes::default(); n_p * n_q];
        for h in 0..n_p {
            for k in 0..n_q {
                let out = &mut sparse[h * n_q + k];
                if h < k {
                    if h == top {
                        out.push(h, 1.0);
                    } else {
                        out.push(h, r);
                        out.push(h + 1, p);
                    }
                } else if h > k {
                    out.push(k, r);
                    out.push(h, p);
                } else if h == 0 {
                    out.push(0, r);
                    out.push(1, p);
                } else if h < top {
                    out.push(h - 1, q);
                    out.push(h, 1.0 - (p + q));
                    out.push(h + 1, p);
                } else {
                    out.push(h - 1, q);
                    out.push(h, 1.0 - q);
                }
            }
        }
        let mut dense = vec![0.0; n_p * n_p * n_q];
        for h in 0..n_p {
            for k in 0..n_q {
                for (j, prob) in sparse[h * n_q + k].iter() {
                    dense[(j * n_p + h) * n_q + k] = prob;
                }
            }
        }
        Ok(Self { candidate_classes: n_p, field_classes: n_q, dense, sparse })
    }

    pub fn candidate_classes(&self) -> usize {
        self.candidate_classes
    }

    pub fn field_classes(&self) -> usize {
        self.field_classes
    }

    /// Probability that candidate class `h` meeting field class `k` moves to `j`.
    pub fn get(&self, j: usize, h: usize, k: usize) -> f64 {
        self.dense[self.index(j, h, k)]
    }

    /// Overwrites one entry. Intended for fault injection in checks.
    pub fn set(&mut self, j: usize, h: usize, k: usize, value: f64) {
        let idx = self.index(j, h, k);
        self.dense[idx] = value;
        let mut out = Outcomes::default();
        for jj in 0..self.candidate_classes {
            out.push(jj, self.get(jj, h, k));
        }
        self.sparse[h * self.field_classes + k] = out;
    }

    /// Nonzero outcomes of the `(h, k)` encounter.
    pub fn outcomes(&self, h: usize, k: usize) -> &Outcomes {
        &self.sparse[h * self.field_classes + k]
    }

    fn index(&self, j: usize, h: usize, k: usize) -> usize {
        assert!(j < self.candidate_classes && h < self.candidate_classes && k < self.field_classes);
        (j * self.candidate_classes + h) * self.field_classes + k
    }
}

/// All tables of a mixture: `block(p, q)` is the self table when `p == q`,
/// otherwise the cross table with candidates from `p` and field vehicles from `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct GameTables {
    blocks: Vec<Vec<InteractionTable>>,
}

impl GameTables {
    pub fn build(lattices: &[&SpeedLattice], probs: TransitionProbabilities) -> Result<Self, ModelError> {
        let blocks = lattices
            .iter()
            .map(|cand| {
                lattices
                    .iter()
                    .map(|field| InteractionTable::build(cand, field, probs))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { blocks })
    }

    pub fn from_blocks(blocks: Vec<Vec<InteractionTable>>) -> Self {
        Self { blocks }
    }

    pub fn populations(&self) -> usize {
        self.blocks.len()
    }

    pub fn classes(&self, p: usize) -> usize {
        self.blocks[p][p].candidate_classes()
    }

    pub fn block(&self, p: usize, q: usize) -> &InteractionTable {
        &self.blocks[p][q]
    }

    pub fn block_mut(&mut self, p: usize, q: usize) -> &mut InteractionTable {
        &mut self.blocks[p][q]
    }

    /// Dumps every nonzero entry as `p,q,j,h,k,probability` with 1-based classes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "p,q,j,h,k,probability")?;
        for (p, row) in self.blocks.iter().enumerate() {
            for (q, table) in row.iter().enumerate() {
                for j in 0..table.candidate_classes() {
                    for h in 0..table.candidate_classes() {
                        for k in 0..table.field_classes() {
                            let v = table.get(j, h, k);
                            if v != 0.0 {
                                writeln!(w, "{},{},{},{},{},{:.16e}", p, q, j + 1, h + 1, k + 1, v)?;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// An `(h, k)` encounter whose outcome probabilities do not sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticViolation {
    pub p: usize,
    pub q: usize,
    pub h: usize,
    pub k: usize,
    pub sum: f64,
}

/// Lists every encounter whose outcome probabilities miss 1 by more than
/// [`STOCHASTIC_TOL`], or that has an entry outside [0, 1].
pub fn check_stochastic(tables: &GameTables) -> Vec<StochasticViolation> {
    let mut report = Vec::new();
    for (p, row) in tables.blocks.iter().enumerate() {
        for (q, table) in row.iter().enumerate() {
            for h in 0..table.candidate_classes() {
                for k in 0..table.field_classes() {
                    let column = (0..table.candidate_classes()).map(|j| table.get(j, h, k));
                    let out_of_range = column.clone().any(|v| !(0.0..=1.0).contains(&v));
                    let sum: f64 = column.sum();
                    if out_of_range || (sum - 1.0).abs() > STOCHASTIC_TOL {
                        report.push(StochasticViolation { p, q, h, k, sum });
                    }
                }
            }
        }
    }
    report
}
