use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Affine,
    Deformable,
}

impl std::fmt::Display for TransformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransformKind::Affine => "affine",
            TransformKind::Deformable => "deformable",
        })
    }
}

/// Which chain the refinement of iteration `i` is composed onto.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TkPolicy {
    /// The chain from iteration `i - 1`.
    Previous,
    /// The chain from a fixed earlier iteration.
    Frozen(usize),
}

/// Term weights: smoothed same slice (`a`), unsmoothed same slice (`b`),
/// each neighbour (`c`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Weights {
    pub const AFFINE: Weights = Weights { a: 1.0, b: 0.5, c: 0.5 };
    pub const DEFORMABLE: Weights = Weights { a: 0.0, b: 1.0, c: 0.25 };

    /// `[a, b, c_prev, c_next]` with missing neighbours dropped and the
    /// remaining weights scaled up so the total is unchanged.
    pub fn for_slice(&self, has_prev: bool, has_next: bool) -> [f64; 4] {
        let full = self.a + self.b + 2.0 * self.c;
        let cp = if has_prev { self.c } else { 0.0 };
        let cn = if has_next { self.c } else { 0.0 };
        let kept = self.a + self.b + cp + cn;
        let s = if kept > 0.0 { full / kept } else { 1.0 };
        [self.a * s, self.b * s, cp * s, cn * s]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    /// First and last iteration, inclusive.
    pub first: usize,
    pub last: usize,
    pub kind: TransformKind,
    pub weights: Weights,
    pub tk: TkPolicy,
}

/// Contiguous phases covering iterations `0..=last`. Iteration 0 is the
/// initial per-slice affine alignment to the reference modality; its
/// weights are unused.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSchedule {
    pub phases: Vec<Phase>,
}

impl Default for IterationSchedule {
    fn default() -> Self {
        IterationSchedule {
            phases: vec![
                Phase {
                    first: 0,
                    last: 0,
                    kind: TransformKind::Affine,
                    weights: Weights::AFFINE,
                    tk: TkPolicy::Previous,
                },
                Phase {
                    first: 1,
                    last: 2,
                    kind: TransformKind::Affine,
                    weights: Weights::AFFINE,
                    tk: TkPolicy::Previous,
                },
                Phase {
                    first: 3,
                    last: 6,
                    kind: TransformKind::Deformable,
                    weights: Weights::DEFORMABLE,
                    tk: TkPolicy::Frozen(2),
                },
            ],
        }
    }
}

impl IterationSchedule {
    /// Stage-2 schedule: the initial affine, then `deformable` iterations
    /// composed onto it.
    pub fn ish(deformable: usize) -> Self {
        let mut phases = vec![Phase {
            first: 0,
            last: 0,
            kind: TransformKind::Affine,
            weights: Weights::AFFINE,
            tk: TkPolicy::Previous,
        }];
        if deformable > 0 {
            phases.push(Phase {
                first: 1,
                last: deformable,
                kind: TransformKind::Deformable,
                weights: Weights::DEFORMABLE,
                tk: TkPolicy::Frozen(0),
            });
        }
        IterationSchedule { phases }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("schedule: {msg}")));
        let Some(first) = self.phases.first() else {
            return bad("no phases".into());
        };
        if first.first != 0 || first.kind != TransformKind::Affine {
            return bad("must start with an affine phase at iteration 0".into());
        }
        let mut next = 0;
        for p in &self.phases {
            if p.first != next || p.last < p.first {
                return bad(format!("phase {}..={} is not contiguous", p.first, p.last));
            }
            let w = p.weights;
            if [w.a, w.b, w.c].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad(format!("negative weight in phase starting at {}", p.first));
            }
            if p.first > 0 && w.a + w.b + w.c == 0.0 {
                return bad(format!("all weights zero in phase starting at {}", p.first));
            }
            if let TkPolicy::Frozen(k) = p.tk {
                if k >= p.first {
                    return bad(format!("T^k frozen at {k}, which is not before iteration {}", p.first));
                }
            }
            next = p.last + 1;
        }
        Ok(())
    }

    pub fn last_iteration(&self) -> usize {
        self.phases.last().map(|p| p.last).unwrap_or(0)
    }

    pub fn phase_for(&self, iteration: usize) -> Option<&Phase> {
        self.phases.iter().find(|p| (p.first..=p.last).contains(&iteration))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule() {
        let s = IterationSchedule::default();
        s.validate().unwrap();
        assert_eq!(s.last_iteration(), 6);
        assert_eq!(s.phase_for(3).unwrap().kind, TransformKind::Deformable);
        assert_eq!(s.phase_for(2).unwrap().weights, Weights { a: 1.0, b: 0.5, c: 0.5 });
        assert_eq!(s.phase_for(6).unwrap().tk, TkPolicy::Frozen(2));
    }

    #[test]
    fn boundary_weights_keep_total() {
        let w = Weights::AFFINE.for_slice(false, true);
        assert_eq!(w[2], 0.0);
        assert!((w.iter().sum::<f64>() - 2.5).abs() < 1e-12);
        assert!((w[0] / w[1] - 2.0).abs() < 1e-12);
        assert_eq!(Weights::DEFORMABLE.for_slice(true, true), [0.0, 1.0, 0.25, 0.25]);
    }

    #[test]
    fn rejects_gaps_and_bad_freeze() {
        let mut s = IterationSchedule::default();
        s.phases[2].first = 4;
        assert!(s.validate().is_err());
        let mut s = IterationSchedule::default();
        s.phases[2].tk = TkPolicy::Frozen(3);
        assert!(s.validate().is_err());
    }

    #[test]
    fn ish_schedule_has_two_deformable_iterations() {
        let s = IterationSchedule::ish(2);
        s.validate().unwrap();
        assert_eq!(s.last_iteration(), 2);
        assert_eq!(s.phase_for(1).unwrap().tk, TkPolicy::Frozen(0));
    }
}
