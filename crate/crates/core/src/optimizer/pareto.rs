//! Pareto dominance, non-dominated filtering and 2-D hypervolume.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::OptError;
use crate::math::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

impl Sense {
    /// Whether `a` is at least as good as `b`.
    fn no_worse<T: Real>(self, a: T, b: T) -> bool {
        match self {
            Sense::Min => a <= b,
            Sense::Max => a >= b,
        }
    }
}

/// `a` dominates `b`: no worse in every objective and better in one.
pub fn dominates<T: Real>(a: &[T], b: &[T], senses: &[Sense]) -> bool {
    let mut strictly = false;
    for ((x, y), s) in a.iter().zip(b).zip(senses) {
        if !s.no_worse(*x, *y) {
            return false;
        }
        if x != y {
            strictly = true;
        }
    }
    strictly
}

fn lexicographic<T: Real>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Indices of the non-dominated points, ordered lexicographically by their
/// objective vectors (ties by index). Duplicated vectors are all kept.
pub fn pareto_front<T: Real>(points: &[Vec<T>], senses: &[Sense]) -> Vec<usize> {
    // a dominator precedes what it dominates in the sense-adjusted
    // lexicographic order, so one pass against the growing front suffices
    let adjusted: Vec<Vec<T>> = points
        .iter()
        .map(|p| {
            p.iter()
                .zip(senses)
                .map(|(v, s)| if *s == Sense::Max { -*v } else { *v })
                .collect()
        })
        .collect();
    let mut sorted: Vec<usize> = (0..points.len()).collect();
    sorted.sort_by(|&i, &j| lexicographic(&adjusted[i], &adjusted[j]).then(i.cmp(&j)));
    let mut front: Vec<usize> = Vec::new();
    for i in sorted {
        if points[i].iter().any(|v| v.is_nan()) {
            continue;
        }
        if !front.iter().any(|&f| dominates(&points[f], &points[i], senses)) {
            front.push(i);
        }
    }
    front.sort_by(|&i, &j| lexicographic(&points[i], &points[j]).then(i.cmp(&j)));
    front
}

/// Area dominated by `front` and bounded by `reference`, for two objectives.
/// Points that do not dominate the reference are ignored.
pub fn hypervolume_2d<T: Real>(front: &[Vec<T>], reference: &[T], senses: &[Sense]) -> Result<T, OptError> {
    if reference.len() != 2 || senses.len() != 2 || front.iter().any(|p| p.len() != 2) {
        return Err(OptError::Dimension);
    }
    // map to maximization of the gain over the reference
    let gain = |p: &[T], k: usize| match senses[k] {
        Sense::Max => p[k] - reference[k],
        Sense::Min => reference[k] - p[k],
    };
    let mut pts: Vec<(T, T)> = front
        .iter()
        .map(|p| (gain(p, 0), gain(p, 1)))
        .filter(|(a, b)| *a > T::zero() && *b > T::zero())
        .collect();
    pts.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let mut area = T::zero();
    let mut height = T::zero();
    for (x, y) in pts {
        if y > height {
            area += x * (y - height);
            height = y;
        }
    }
    Ok(area)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizing_front() {
        let pts = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 3.0]];
        assert_eq!(pareto_front(&pts, &[Sense::Min, Sense::Min]), vec![0, 1]);
        assert_eq!(pareto_front(&pts, &[Sense::Max, Sense::Max]), vec![2]);
    }

    #[test]
    fn singleton_front() {
        assert_eq!(pareto_front(&[vec![0.3f32, 0.1]], &[Sense::Max, Sense::Min]), vec![0]);
    }

    #[test]
    fn rectangles() {
        let s = [Sense::Max, Sense::Max];
        assert_eq!(hypervolume_2d(&[vec![1.0, 1.0]], &[0.0, 0.0], &s).unwrap(), 1.0);
        assert_eq!(
            hypervolume_2d(&[vec![1.0, 2.0], vec![2.0, 1.0]], &[0.0, 0.0], &s).unwrap(),
            3.0
        );
        assert_eq!(
            hypervolume_2d(&[vec![1.0, 2.0, 3.0]], &[0.0, 0.0], &s),
            Err(OptError::Dimension)
        );
    }
}
