//! In-plane rotations, flips, velocity negation and component swap, applied covariantly.

use ndarray::{Array2, Array4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::extract::PatchPair;

/// Applied in the order rotate, flip_h, flip_v, negate, swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AugmentSpec {
    /// counter-clockwise quarter turns in the (row, col) plane, 0..4
    pub quarter_turns: u8,
    /// mirror columns
    pub flip_h: bool,
    /// mirror rows
    pub flip_v: bool,
    pub negate_velocity: bool,
    /// transpose the plane and exchange the two in-plane components
    pub swap: bool,
}

impl AugmentSpec {
    pub fn random<R: Rng>(rng: &mut R) -> AugmentSpec {
        AugmentSpec {
            quarter_turns: rng.gen_range(0..4),
            flip_h: rng.gen(),
            flip_v: rng.gen(),
            negate_velocity: rng.gen(),
            swap: rng.gen(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.quarter_turns % 4 == 0
            && !self.flip_h
            && !self.flip_v
            && !self.negate_velocity
            && !self.swap
    }
}

#[derive(Clone, Copy)]
enum Op {
    Rotate,
    FlipH,
    FlipV,
    Negate,
    Swap,
}

/// Source position of output `(r, c)` for a square `n×n` plane.
fn source(op: Op, n: usize, r: usize, c: usize) -> (usize, usize) {
    match op {
        Op::Rotate => (c, n - 1 - r),
        Op::FlipH => (r, n - 1 - c),
        Op::FlipV => (n - 1 - r, c),
        Op::Swap => (c, r),
        Op::Negate => (r, c),
    }
}

/// New in-plane velocity `(v1', v2')` from the source `(v1, v2)`.
fn mix(op: Op, v1: f32, v2: f32) -> (f32, f32) {
    match op {
        Op::Rotate => (-v2, v1),
        Op::FlipH => (v1, -v2),
        Op::FlipV => (-v1, v2),
        Op::Swap => (v2, v1),
        Op::Negate => (-v1, -v2),
    }
}

fn apply_stack(a: &Array4<f32>, op: Op) -> Array4<f32> {
    let (nch, n, n2, nt) = a.dim();
    debug_assert_eq!(n, n2, "augmentation needs square patches");
    let mut out = Array4::zeros(a.raw_dim());
    for r in 0..n {
        for c in 0..n {
            let (sr, sc) = source(op, n, r, c);
            for t in 0..nt {
                let (v1, v2) = mix(op, a[[0, sr, sc, t]], a[[1, sr, sc, t]]);
                out[[0, r, c, t]] = v1;
                out[[1, r, c, t]] = v2;
                let v3 = a[[2, sr, sc, t]];
                out[[2, r, c, t]] = if matches!(op, Op::Negate) { -v3 } else { v3 };
                for ch in 3..nch {
                    out[[ch, r, c, t]] = a[[ch, sr, sc, t]];
                }
            }
        }
    }
    out
}

fn apply_mask(m: &Array2<bool>, op: Op) -> Array2<bool> {
    let n = m.nrows();
    Array2::from_shape_fn(m.raw_dim(), |(r, c)| m[source(op, n, r, c)])
}

fn apply(p: &mut PatchPair, op: Op) {
    p.lr = apply_stack(&p.lr, op);
    p.hr = apply_stack(&p.hr, op);
    p.mask = apply_mask(&p.mask, op);
}

fn ops(a: &AugmentSpec) -> Vec<Op> {
    let mut v = vec![Op::Rotate; (a.quarter_turns % 4) as usize];
    if a.flip_h {
        v.push(Op::FlipH);
    }
    if a.flip_v {
        v.push(Op::FlipV);
    }
    if a.negate_velocity {
        v.push(Op::Negate);
    }
    if a.swap {
        v.push(Op::Swap);
    }
    v
}

pub fn augment(p: &PatchPair, a: &AugmentSpec) -> PatchPair {
    let mut out = p.clone();
    for op in ops(a) {
        apply(&mut out, op);
    }
    out
}

/// Undo [`augment`] with the same spec.
pub fn augment_inverse(p: &PatchPair, a: &AugmentSpec) -> PatchPair {
    let mut out = p.clone();
    for op in ops(a).into_iter().rev() {
        let reps = if matches!(op, Op::Rotate) { 3 } else { 1 };
        for _ in 0..reps {
            apply(&mut out, op);
        }
    }
    out
}
