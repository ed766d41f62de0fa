//! Derivative-free Nelder-Mead simplex minimization.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Stop when `f(worst) - f(best)` falls below this.
    pub f_tol: f64,
    /// Stop when every vertex is within this distance of the best one.
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            f_tol: 1e-8,
            x_tol: 1e-7,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Final `f(worst) - f(best)`.
    pub f_spread: f64,
    /// Final largest vertex distance from the best vertex.
    pub x_spread: f64,
    /// Best objective value after each iteration (non-increasing).
    pub history: Vec<f64>,
}

/// Minimizes `f` from `x0` with initial simplex offsets `steps`.
/// Non-finite objective values are treated as `+inf`, which lets callers
/// encode box constraints by returning `f64::INFINITY` outside the box.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    let spreads = |simplex: &[Vec<f64>], values: &[f64]| {
        let fs = values[n] - values[0];
        let xs = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        (fs, xs)
    };

    loop {
        // order vertices by value
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&k| simplex[k].clone()).collect();
        values = order.iter().map(|&k| values[k]).collect();
        history.push(values[0]);

        let (fs, xs) = spreads(&simplex, &values);
        if values[0].is_finite() && fs <= opts.f_tol && xs <= opts.x_tol {
            converged = true;
            break;
        }
        if values[0].is_finite() && fs <= opts.f_tol * 1e-3 {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].clone();
        for k in 1..=n {
            let v: Vec<f64> = simplex[k]
                .iter()
                .zip(&best)
                .map(|(x, b)| b + 0.5 * (x - b))
                .collect();
            values[k] = eval(&v, &mut evals);
            simplex[k] = v;
        }
    }

    let (fs, xs) = spreads(&simplex, &values);
    Minimum {
        x: simplex[0].clone(),
        f: values[0],
        iterations,
        evaluations: evals,
        converged,
        f_spread: fs,
        x_spread: xs,
        history,
    }
}
