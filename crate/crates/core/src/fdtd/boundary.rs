//! Linear interpolation along the boundary arclength.

use crate::field::BoundaryNode;

/// For each target, two source slots and the weight of the first.
#[derive(Debug, Clone)]
pub(crate) struct ArcInterp {
    pub(crate) stencils: Vec<(usize, usize, f64)>,
}

impl ArcInterp {
    /// `sources` must be sorted by arclength. With `cyclic` the last source
    /// connects back to the first across arclength `perimeter`; otherwise
    /// targets outside the source range take the nearest end value.
    pub(crate) fn new(sources: &[f64], targets: &[f64], perimeter: f64, cyclic: bool) -> Self {
        let n = sources.len();
        let tol = 1e-12 * perimeter;
        let stencils = targets
            .iter()
            .map(|&t| {
                let k = sources.partition_point(|&s| s <= t + tol);
                if k == 0 {
                    if !cyclic || (sources[0] - t).abs() <= tol {
                        return (0, 0, 1.0);
                    }
                    let (lo, hi) = (sources[n - 1] - perimeter, sources[0]);
                    return (n - 1, 0, (hi - t) / (hi - lo));
                }
                let i = k - 1;
                if (t - sources[i]).abs() <= tol {
                    return (i, i, 1.0);
                }
                if i + 1 == n {
                    if !cyclic {
                        return (i, i, 1.0);
                    }
                    let (lo, hi) = (sources[i], sources[0] + perimeter);
                    return (i, 0, (hi - t) / (hi - lo));
                }
                let (lo, hi) = (sources[i], sources[i + 1]);
                (i, i + 1, (hi - t) / (hi - lo))
            })
            .collect();
        Self { stencils }
    }

    pub(crate) fn apply<'a>(&'a self, values: impl Fn(usize) -> f64 + 'a) -> impl Iterator<Item = f64> + 'a {
        let v = move |(a, b, w): (usize, usize, f64)| if w == 1.0 { values(a) } else { w * values(a) + (1.0 - w) * values(b) };
        self.stencils.iter().map(move |&s| v(s))
    }
}

/// Boundary nodes forming `Σ₁` for detectors at the given (sorted)
/// arclengths, and whether the detectors wrap around the whole boundary.
///
/// Detectors wrap when the gap across arclength 0 is no larger than 1.5 times
/// the largest gap between neighbours; otherwise `Σ₁` is the arc they span,
/// end points included.
pub(crate) fn measured_nodes(nodes: &[BoundaryNode], detectors: &[f64], perimeter: f64) -> (Vec<BoundaryNode>, bool) {
    let n = detectors.len();
    let widest = detectors.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let wrap = perimeter - detectors[n - 1] + detectors[0];
    let cyclic = n >= 3 && wrap <= 1.5 * widest + 1e-12 * perimeter;
    if cyclic {
        return (nodes.to_vec(), true);
    }
    let tol = 1e-9 * perimeter;
    let (lo, hi) = (detectors[0] - tol, detectors[n - 1] + tol);
    let mut inside: Vec<BoundaryNode> = nodes
        .iter()
        .copied()
        .filter(|b| (lo..=hi).contains(&b.arclength) || (lo..=hi).contains(&(b.arclength + perimeter)))
        .map(|b| if b.arclength < lo { BoundaryNode { arclength: b.arclength + perimeter, ..b } } else { b })
        .collect();
    inside.sort_by(|a, b| a.arclength.total_cmp(&b.arclength));
    (inside, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_linear_data_exactly() {
        let src = [0.0, 1.0, 2.5, 4.0];
        let f = |s: f64| 3.0 * s - 1.0;
        let interp = ArcInterp::new(&src, &[0.5, 1.0, 3.0, 4.0], 5.0, false);
        let got: Vec<f64> = interp.apply(|i| f(src[i])).collect();
        for (g, t) in got.iter().zip([0.5, 1.0, 3.0, 4.0]) {
            assert!((g - f(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn wraps_when_cyclic_and_clamps_otherwise() {
        let src = [1.0, 2.0, 3.0];
        let cyc = ArcInterp::new(&src, &[3.5, 0.5], 4.0, true);
        let vals = [10.0, 20.0, 30.0];
        let got: Vec<f64> = cyc.apply(|i| vals[i]).collect();
        assert!((got[0] - 25.0).abs() < 1e-12 && (got[1] - 15.0).abs() < 1e-12);
        let open = ArcInterp::new(&src, &[0.5, 3.5], 4.0, false);
        let got: Vec<f64> = open.apply(|i| vals[i]).collect();
        assert_eq!(got, vec![10.0, 30.0]);
    }

    #[test]
    fn measured_arc_includes_end_points() {
        let nodes: Vec<BoundaryNode> = (0..16).map(|i| BoundaryNode { index: i, arclength: i as f64 * 0.25 }).collect();
        let (sel, cyclic) = measured_nodes(&nodes, &[1.0, 1.5, 2.0], 4.0);
        assert!(!cyclic);
        assert_eq!(sel.iter().map(|b| b.index).collect::<Vec<_>>(), vec![4, 5, 6, 7, 8]);
        let full: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        assert!(measured_nodes(&nodes, &full, 4.0).1);
    }
}
