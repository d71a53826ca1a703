//! Nelder-Mead downhill simplex minimization with canonical coefficients
//! (reflection 1.0, expansion 2.0, contraction 0.5, shrink 0.5) and a
//! caller-supplied stop rule evaluated whenever the best vertex improves.
//!
//! Infeasible evaluations may return `f64::INFINITY`; such vertices are
//! ordered worst and get replaced like any other, which keeps the simplex
//! alive near feasibility boundaries.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Stop when the largest vertex-to-best distance falls below this
    /// (parameter-space units). `None` disables the size criterion.
    pub size_tolerance: Option<f64>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_iterations: 200, size_tolerance: None }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const REFLECTION: f64 = 1.0;
const EXPANSION: f64 = 2.0;
const CONTRACTION: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimize `f` starting from the given simplex (n+1 vertices of dimension n).
///
/// `accept_best(previous_best, new_best) -> bool` is consulted each time the
/// incumbent best vertex is replaced by a better one; returning `true` stops
/// the iteration with `converged = true`.
pub fn minimize<F, S>(
    mut f: F,
    initial: Vec<Vec<f64>>,
    opts: &SimplexOptions,
    mut accept_best: S,
) -> SimplexOutcome
where
    F: FnMut(&[f64]) -> f64,
    S: FnMut(&[f64], &[f64]) -> bool,
{
    assert!(initial.len() >= 2, "simplex needs at least two vertices");
    let dim = initial[0].len();
    assert_eq!(initial.len(), dim + 1, "simplex must have dim + 1 vertices");

    let sanitize = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut vertices: Vec<(Vec<f64>, f64)> = initial
        .into_iter()
        .map(|x| {
            let fx = sanitize(f(&x));
            (x, fx)
        })
        .collect();
    vertices.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iterations {
        iterations += 1;

        // Centroid of all vertices but the worst.
        let worst = vertices.len() - 1;
        let mut centroid = vec![0.0; dim];
        for (x, _) in &vertices[..worst] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi;
            }
        }
        for c in &mut centroid {
            *c /= worst as f64;
        }

        let combine = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&vertices[worst].0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let reflected = combine(REFLECTION);
        let f_reflected = sanitize(f(&reflected));

        let replacement = if f_reflected < vertices[0].1 {
            let expanded = combine(EXPANSION);
            let f_expanded = sanitize(f(&expanded));
            if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            }
        } else if f_reflected < vertices[worst - 1].1 {
            (reflected, f_reflected)
        } else {
            // Contract toward the better of the worst vertex and its
            // reflection; shrink the whole simplex when that fails too.
            let (contracted, threshold) = if f_reflected < vertices[worst].1 {
                (combine(CONTRACTION), f_reflected)
            } else {
                (combine(-CONTRACTION), vertices[worst].1)
            };
            let f_contracted = sanitize(f(&contracted));
            if f_contracted < threshold {
                (contracted, f_contracted)
            } else {
                let best = vertices[0].0.clone();
                for (x, fx) in vertices.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&best) {
                        *xi = bi + SHRINK * (*xi - bi);
                    }
                    *fx = sanitize(f(x));
                }
                vertices.sort_by(|a, b| a.1.total_cmp(&b.1));
                if simplex_small(&vertices, opts.size_tolerance) {
                    converged = true;
                    break;
                }
                continue;
            }
        };

        let improved_best = replacement.1 < vertices[0].1;
        let previous_best = vertices[0].0.clone();
        vertices[worst] = replacement;
        vertices.sort_by(|a, b| a.1.total_cmp(&b.1));

        if improved_best && accept_best(&previous_best, &vertices[0].0) {
            converged = true;
            break;
        }
        if simplex_small(&vertices, opts.size_tolerance) {
            converged = true;
            break;
        }
    }

    let (best, best_value) = vertices.swap_remove(0);
    SimplexOutcome { best, best_value, iterations, converged }
}

fn simplex_small(vertices: &[(Vec<f64>, f64)], tol: Option<f64>) -> bool {
    let Some(tol) = tol else { return false };
    let best = &vertices[0].0;
    vertices[1..].iter().all(|(x, _)| {
        x.iter()
            .zip(best)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
            < tol
    })
}

/// Axis-aligned initial simplex: the base point plus one step along each axis.
pub fn axis_simplex(base: &[f64], steps: &[f64]) -> Vec<Vec<f64>> {
    assert_eq!(base.len(), steps.len());
    let mut vertices = vec![base.to_vec()];
    for (i, &s) in steps.iter().enumerate() {
        let mut v = base.to_vec();
        v[i] += s;
        vertices.push(v);
    }
    vertices
}
