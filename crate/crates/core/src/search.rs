//! Deterministic maximization on intervals and boxes: a grid scan followed by
//! golden-section refinement, and corner enumeration plus coordinate sweeps.

use rayon::prelude::*;

/// Relative slack below which two candidate values count as tied. Ties keep
/// the earlier candidate, which is the smaller argument in every scan here.
pub const TIE_REL_TOL: f64 = 1e-13;

const PAR_THRESHOLD: usize = 256;
const MAX_SWEEPS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarMax {
    pub arg: f64,
    pub value: f64,
}

/// True when `candidate` beats `incumbent` by more than the tie slack.
#[inline]
pub fn strictly_better(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + TIE_REL_TOL * incumbent.abs().max(1e-300)
}

/// Index of the first maximum, with ties resolved toward the lower index.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if strictly_better(v, values[best]) {
            best = i;
        }
    }
    best
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![lo; n.max(1)];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect()
}

/// Golden-section search for a maximum of `f` on `[a, b]`.
pub fn golden_max(f: &(impl Fn(f64) -> f64 + ?Sized), mut a: f64, mut b: f64, tol: f64) -> ScalarMax {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol * (1.0 + c.abs().max(d.abs())) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        ScalarMax { arg: c, value: fc }
    } else {
        ScalarMax { arg: d, value: fd }
    }
}

/// Maximizes `f` on `[lo, hi]` by scanning `grid` equispaced points and, when
/// `refine`, running golden-section search in the cells adjacent to the best point.
/// The refined point replaces the grid point only when strictly better.
pub fn maximize_on_interval(
    f: &(impl Fn(f64) -> f64 + Sync + ?Sized),
    lo: f64,
    hi: f64,
    grid: usize,
    refine: bool,
    tol: f64,
) -> ScalarMax {
    if lo == hi {
        return ScalarMax { arg: lo, value: f(lo) };
    }
    let grid = grid.max(2);
    let xs = linspace(lo, hi, grid);
    let values: Vec<f64> = if grid >= PAR_THRESHOLD {
        xs.par_iter().map(|&x| f(x)).collect()
    } else {
        xs.iter().map(|&x| f(x)).collect()
    };
    let i = argmax_first(&values);
    let mut best = ScalarMax {
        arg: xs[i],
        value: values[i],
    };
    if refine {
        let left = if i > 0 { xs[i - 1] } else { xs[i] };
        let right = if i + 1 < grid { xs[i + 1] } else { xs[i] };
        let refined = golden_max(f, left, right, tol);
        if strictly_better(refined.value, best.value) {
            best = refined;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxMax {
    pub arg: Vec<f64>,
    pub value: f64,
}

/// Exhaustive tensor-grid scan of a box, followed by coordinate sweeps.
pub fn maximize_on_box(
    f: &(impl Fn(&[f64]) -> f64 + Sync + ?Sized),
    bounds: &[(f64, f64)],
    grid_per_dim: usize,
    refine: bool,
    tol: f64,
) -> BoxMax {
    let d = bounds.len();
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| if lo == hi { vec![lo] } else { linspace(lo, hi, grid_per_dim.max(2)) })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let point_of = |mut flat: usize| -> Vec<f64> {
        let mut p = vec![0.0; d];
        for k in 0..d {
            let len = axes[k].len();
            p[k] = axes[k][flat % len];
            flat /= len;
        }
        p
    };
    let values: Vec<f64> = if total >= PAR_THRESHOLD {
        (0..total).into_par_iter().map(|i| f(&point_of(i))).collect()
    } else {
        (0..total).map(|i| f(&point_of(i))).collect()
    };
    let i = argmax_first(&values);
    let mut best = BoxMax {
        arg: point_of(i),
        value: values[i],
    };
    if refine {
        let steps: Vec<f64> = axes
            .iter()
            .map(|a| if a.len() > 1 { a[1] - a[0] } else { 0.0 })
            .collect();
        coordinate_sweeps(f, bounds, &mut best, &steps, tol);
    }
    best
}

/// Evaluates all `2^d` corners, then refines by coordinate sweeps over full
/// coordinate ranges.
pub fn maximize_corners_then_sweep(
    f: &(impl Fn(&[f64]) -> f64 + Sync + ?Sized),
    bounds: &[(f64, f64)],
    sweep_grid: usize,
    refine: bool,
    tol: f64,
) -> BoxMax {
    let d = bounds.len();
    let corners = 1usize << d;
    let corner = |mask: usize| -> Vec<f64> {
        (0..d)
            .map(|k| if mask >> k & 1 == 1 { bounds[k].1 } else { bounds[k].0 })
            .collect()
    };
    let values: Vec<f64> = if corners >= PAR_THRESHOLD {
        (0..corners).into_par_iter().map(|m| f(&corner(m))).collect()
    } else {
        (0..corners).map(|m| f(&corner(m))).collect()
    };
    let i = argmax_first(&values);
    let mut best = BoxMax {
        arg: corner(i),
        value: values[i],
    };
    if refine {
        for _ in 0..MAX_SWEEPS {
            let before = best.value;
            for k in 0..d {
                let (lo, hi) = bounds[k];
                if lo == hi {
                    continue;
                }
                let base = best.arg.clone();
                let line = |x: f64| {
                    let mut p = base.clone();
                    p[k] = x;
                    f(&p)
                };
                let m = maximize_on_interval(&line, lo, hi, sweep_grid, true, tol);
                if strictly_better(m.value, best.value) {
                    best.arg[k] = m.arg;
                    best.value = m.value;
                }
            }
            if !strictly_better(best.value, before) {
                break;
            }
        }
    }
    best
}

fn coordinate_sweeps(
    f: &(impl Fn(&[f64]) -> f64 + Sync + ?Sized),
    bounds: &[(f64, f64)],
    best: &mut BoxMax,
    steps: &[f64],
    tol: f64,
) {
    let d = bounds.len();
    for _ in 0..MAX_SWEEPS {
        let before = best.value;
        for k in 0..d {
            if steps[k] == 0.0 {
                continue;
            }
            let lo = (best.arg[k] - steps[k]).max(bounds[k].0);
            let hi = (best.arg[k] + steps[k]).min(bounds[k].1);
            let base = best.arg.clone();
            let line = |x: f64| {
                let mut p = base.clone();
                p[k] = x;
                f(&p)
            };
            let m = golden_max(&line, lo, hi, tol);
            if strictly_better(m.value, best.value) {
                best.arg[k] = m.arg;
                best.value = m.value;
            }
        }
        if !strictly_better(best.value, before) {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_maximum_is_refined() {
        let m = maximize_on_interval(&|x: f64| -(x - 0.3141).powi(2), 0.0, 1.0, 9, true, 1e-12);
        assert!((m.arg - 0.3141).abs() < 1e-8);
        assert!(m.value.abs() < 1e-15);
    }

    #[test]
    fn endpoint_maximum_is_exact() {
        let m = maximize_on_interval(&|x: f64| x * x, 1.0, 2.0, 65, true, 1e-10);
        assert_eq!(m.arg, 2.0);
        assert_eq!(m.value, 4.0);
    }

    #[test]
    fn ties_prefer_the_smaller_argument() {
        let m = maximize_on_interval(&|_x: f64| 1.0, 1.0, 2.0, 5, true, 1e-10);
        assert_eq!(m.arg, 1.0);
    }

    #[test]
    fn box_interior_maximum() {
        let f = |p: &[f64]| -(p[0] - 1.5).powi(2) - (p[1] - 1.3).powi(2);
        let m = maximize_on_box(&f, &[(1.0, 2.0), (1.0, 2.0)], 129, true, 1e-12);
        assert!(m.value.abs() < 1e-12);
        assert!((m.arg[1] - 1.3).abs() < 1e-6);
    }

    #[test]
    fn corners_then_sweep_finds_interior_point() {
        let f = |p: &[f64]| -(p[0] - 1.2).powi(2) + p[1];
        let m = maximize_corners_then_sweep(&f, &[(1.0, 2.0), (1.0, 2.0)], 17, true, 1e-12);
        assert_eq!(m.arg[1], 2.0);
        assert!((m.arg[0] - 1.2).abs() < 1e-6);
    }
}
