//! Derivative-free minimizers: Brent's method on an interval and
//! Nelder-Mead simplex descent.

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<X> {
    pub x: X,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Brent's method on `[a, b]`. Stops when the bracket half-width falls under
/// `xtol` (absolute) or after `max_iter` iterations.
pub fn brent<F>(mut f: F, a: f64, b: f64, xtol: f64, max_iter: usize) -> Result<Minimum<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x)?;
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for iter in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = f64::EPSILON.sqrt() * x.abs() * 1e-4 + xtol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Ok(Minimum {
                x,
                fx,
                iterations: iter,
                converged: true,
            });
        }

        let mut golden = true;
        if e.abs() > tol1 {
            // parabola through x, w, v
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u)?;

        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok(Minimum {
        x,
        fx,
        iterations: max_iter,
        converged: false,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Initial edge length along each coordinate.
    pub step: f64,
    /// Spread of function values across the simplex.
    pub ftol: f64,
    /// Max distance of any vertex from the best vertex.
    pub xtol: f64,
    pub max_iter: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            step: 0.5,
            ftol: 1e-10,
            xtol: 1e-9,
            max_iter: 500,
        }
    }
}

/// Nelder-Mead with the standard coefficients (1, 2, 0.5, 0.5).
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: SimplexOptions) -> Result<Minimum<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let dim = x0.len();
    if dim == 0 {
        return Ok(Minimum {
            x: Vec::new(),
            fx: f(x0)?,
            iterations: 0,
            converged: true,
        });
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f(x0)?));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += opts.step;
        let fx = f(&x)?;
        simplex.push((x, fx));
    }

    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(ai, bi)| ai + t * (bi - ai)).collect()
    };

    for iter in 0..opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let spread = simplex[dim].1 - best.1;
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&best.0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.ftol && size <= opts.xtol {
            let (x, fx) = simplex.swap_remove(0);
            return Ok(Minimum {
                x,
                fx,
                iterations: iter,
                converged: true,
            });
        }

        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            centroid
                .iter_mut()
                .zip(x)
                .for_each(|(c, xi)| *c += xi / dim as f64);
        }
        let worst = simplex[dim].0.clone();
        let f_worst = simplex[dim].1;
        let f_second = simplex[dim - 1].1;

        let xr = lerp(&centroid, &worst, -1.0);
        let fr = f(&xr)?;
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &worst, -2.0);
            let fe = f(&xe)?;
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < f_worst {
            let xc = lerp(&centroid, &xr, 0.5);
            let fc = f(&xc)?;
            (xc, fc)
        } else {
            let xc = lerp(&centroid, &worst, 0.5);
            let fc = f(&xc)?;
            (xc, fc)
        };
        if fc < fr.min(f_worst) {
            simplex[dim] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = lerp(&best, &vertex.0, 0.5);
            let fx = f(&x)?;
            *vertex = (x, fx);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    Ok(Minimum {
        x,
        fx,
        iterations: opts.max_iter,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_parabola_vertex() {
        let m = brent(|x| Ok((x - 1.234).powi(2)), -5.0, 5.0, 1e-10, 200).unwrap();
        assert!(m.converged);
        assert!((m.x - 1.234).abs() < 1e-8);
        assert!(m.fx < 1e-16);
    }

    #[test]
    fn brent_handles_minimum_at_edge() {
        let m = brent(Ok, 0.0, 2.0, 1e-10, 200).unwrap();
        assert!(m.x < 1e-8);
    }

    #[test]
    fn brent_non_quadratic() {
        let m = brent(|x: f64| Ok(x.cos()), 2.0, 4.5, 1e-12, 200).unwrap();
        assert!((m.x - std::f64::consts::PI).abs() < 1e-8);
    }

    #[test]
    fn brent_reports_iteration_cap() {
        let m = brent(|x: f64| Ok(x.cos()), 2.0, 4.5, 1e-12, 3).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let rosen = |x: &[f64]| Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let opts = SimplexOptions {
            max_iter: 5000,
            ftol: 1e-14,
            xtol: 1e-10,
            ..Default::default()
        };
        let m = nelder_mead(rosen, &[-1.2, 1.0], opts).unwrap();
        assert!(m.converged);
        assert!(
            (m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6,
            "{:?}",
            m.x
        );
    }

    #[test]
    fn nelder_mead_one_dimension_matches_brent() {
        let f = |x: f64| (x - 0.7).powi(4) + (x - 0.7).powi(2) * 2.0 + x.sin() * 0.1;
        let b = brent(|x| Ok(f(x)), -3.0, 3.0, 1e-10, 200).unwrap();
        let s = nelder_mead(|x| Ok(f(x[0])), &[0.0], SimplexOptions::default()).unwrap();
        assert!((b.x - s.x[0]).abs() < 1e-7);
    }
}
