//! Grid evaluation of trained models.

use super::model::EigenModel;
use crate::error::{Error, Result};

/// Vertex grid over a box: `n` evenly spaced points per axis, endpoints
/// included, last axis varying fastest.
pub fn vertex_grid(axes: &[(f64, f64, usize)]) -> Result<Vec<Vec<f64>>> {
    if axes.is_empty() || axes.iter().any(|&(lo, hi, n)| n < 2 || !(hi > lo)) {
        return Err(Error::validation("every grid axis needs n >= 2 and hi > lo"));
    }
    let mut points = vec![Vec::new()];
    for &(lo, hi, n) in axes {
        let step = (hi - lo) / (n - 1) as f64;
        points = points
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |i| {
                    let mut q = p.clone();
                    q.push(if i == n - 1 { hi } else { lo + i as f64 * step });
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

/// `ψ(x, π(x))` at every point.
pub fn policy_values(model: &EigenModel, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    points.iter().map(|x| model.psi(x, &model.act(x)?)).collect()
}

/// Intersection over union of two equally long membership masks. Two
/// empty sets have IoU 1.
pub fn set_iou(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract("masks differ in length"));
    }
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Mean `ψ(x, π(x))` over positions with obstacle distance in
/// `[0, band)`, once with the heading pointing at the obstacle centre and
/// once pointing straight away from it. Positions come from an `n × n`
/// cell-centred grid over `[-half_width, half_width)²`.
pub fn heading_contrast(
    model: &EigenModel,
    obstacle_radius: f64,
    band: f64,
    half_width: f64,
    n: usize,
) -> Result<(f64, f64, usize)> {
    let (mut into, mut away, mut count) = (0.0, 0.0, 0usize);
    let w = 2.0 * half_width / n as f64;
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (-half_width + (i as f64 + 0.5) * w, -half_width + (j as f64 + 0.5) * w);
            let r = x.hypot(y);
            if r < obstacle_radius || r - obstacle_radius >= band {
                continue;
            }
            let toward = [x, y, (-y).atan2(-x)];
            let from = [x, y, y.atan2(x)];
            into += model.psi(&toward, &model.act(&toward)?)?;
            away += model.psi(&from, &model.act(&from)?)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::validation("no grid positions fall inside the band"));
    }
    Ok((into / count as f64, away / count as f64, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let g = vertex_grid(&[(-1.0, 1.0, 3), (0.0, 1.0, 2)]).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], vec![-1.0, 0.0]);
        assert_eq!(g[1], vec![-1.0, 1.0]);
        assert_eq!(g[5], vec![1.0, 1.0]);
        assert!(vertex_grid(&[(0.0, 1.0, 1)]).is_err());
    }

    #[test]
    fn iou_examples() {
        assert_eq!(set_iou(&[true, true, false], &[true, false, false]).unwrap(), 0.5);
        assert_eq!(set_iou(&[false; 3], &[false; 3]).unwrap(), 1.0);
        assert!(set_iou(&[true], &[]).is_err());
    }
}
