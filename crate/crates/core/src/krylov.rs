//! Restarted, right-preconditioned GMRES on flat vectors.

pub(crate) struct GmresOutcome {
    pub solution: Vec<f64>,
    pub relative_residual: f64,
    pub iterations: usize,
}

/// Solves `A x = b` with `A` given by `apply`, preconditioner `precond`
/// (approximating `A^{-1}`) and inner product `dot`.
pub(crate) fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    dot: impl Fn(&[f64], &[f64]) -> f64,
    b: &[f64],
    tolerance: f64,
    restart: usize,
    max_iterations: usize,
) -> GmresOutcome {
    let n = b.len();
    let norm = |v: &[f64]| dot(v, v).max(0.0).sqrt();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return GmresOutcome {
            solution: x,
            relative_residual: 0.0,
            iterations: 0,
        };
    }
    let mut total = 0;
    let mut rel = 1.0;
    while total < max_iterations {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / b_norm;
        if rel <= tolerance {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut z_basis: Vec<Vec<f64>> = Vec::new();
        // Hessenberg columns, Givens rotations, rhs of the least-squares problem
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut steps = 0;
        for j in 0..restart {
            if total >= max_iterations {
                break;
            }
            total += 1;
            let zj = precond(&basis[j]);
            let mut v = apply(&zj);
            z_basis.push(zj);
            let mut col = vec![0.0; j + 2];
            for (i, q) in basis.iter().enumerate() {
                let hij = dot(&v, q);
                col[i] = hij;
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= hij * b);
            }
            let h_next = norm(&v);
            col[j + 1] = h_next;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = col[j].hypot(col[j + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[j] / denom, col[j + 1] / denom) };
            col[j] = denom;
            col[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[j]);
            g[j] *= c;
            hess.push(col);
            steps = j + 1;
            rel = g[j + 1].abs() / b_norm;
            if rel <= tolerance || h_next == 0.0 {
                break;
            }
            basis.push(v.iter().map(|a| a / h_next).collect());
        }
        // back substitution
        let mut y = vec![0.0; steps];
        for i in (0..steps).rev() {
            let mut acc = g[i];
            for k in i + 1..steps {
                acc -= hess[k][i] * y[k];
            }
            y[i] = if hess[i][i] != 0.0 { acc / hess[i][i] } else { 0.0 };
        }
        for (k, yk) in y.iter().enumerate() {
            x.iter_mut().zip(&z_basis[k]).for_each(|(a, b)| *a += yk * b);
        }
        if rel <= tolerance {
            let ax = apply(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            rel = norm(&r) / b_norm;
            if rel <= tolerance * 10.0 {
                break;
            }
        }
    }
    GmresOutcome {
        solution: x,
        relative_residual: rel,
        iterations: total,
    }
}
