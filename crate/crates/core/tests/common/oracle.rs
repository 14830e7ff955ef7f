//! Dense reference arithmetic on plain vectors, independent of the
//! library's linear algebra.
#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|r| (0..b[0].len()).map(|j| r.iter().zip(b).map(|(x, row)| x * row[j]).sum()).collect())
        .collect()
}

pub fn matvec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let pivot = m[c].clone();
                for (v, pv) in m[r].iter_mut().zip(&pivot) {
                    *v -= f * pv;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Determinant by Gaussian elimination.
pub fn det(a: &Mat) -> f64 {
    let n = a.len();
    let mut m = a.clone();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        if p != c {
            m.swap(c, p);
            d = -d;
        }
        d *= m[c][c];
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for j in c..n {
                m[r][j] -= f * m[c][j];
            }
        }
    }
    d
}

/// Design matrix (T x k) from columns, optionally with a leading ones column.
pub fn design(cols: &[&[f64]], intercept: bool) -> Mat {
    let t = cols[0].len();
    (0..t)
        .map(|s| {
            let mut r = Vec::new();
            if intercept {
                r.push(1.0);
            }
            r.extend(cols.iter().map(|c| c[s]));
            r
        })
        .collect()
}

/// OLS coefficients and residuals.
pub fn ols(y: &[f64], x: &Mat) -> (Vec<f64>, Vec<f64>) {
    let xt = transpose(x);
    let xtx_inv = inverse(&matmul(&xt, x));
    let b = matvec(&xtx_inv, &matvec(&xt, y));
    let fit = matvec(x, &b);
    let e = y.iter().zip(&fit).map(|(a, f)| a - f).collect();
    (b, e)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Divide-by-T covariance of the columns.
pub fn cov_ml(cols: &[&[f64]]) -> Mat {
    let t = cols[0].len() as f64;
    let mu: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    (0..cols.len())
        .map(|i| {
            (0..cols.len())
                .map(|j| cols[i].iter().zip(cols[j]).map(|(a, b)| (a - mu[i]) * (b - mu[j])).sum::<f64>() / t)
                .collect()
        })
        .collect()
}

pub fn quad_inv(a: &Mat, v: &[f64]) -> f64 {
    let z = matvec(&inverse(a), v);
    v.iter().zip(&z).map(|(x, y)| x * y).sum()
}

/// Textbook GRS: `(T/N) ((T-N-K)/(T-K-1)) a' S^{-1} a / (1 + m' O^{-1} m)`
/// with S the degrees-of-freedom corrected residual covariance.
pub fn grs(portfolios: &[&[f64]], factors: &[&[f64]]) -> f64 {
    let n = portfolios.len();
    let k = factors.len();
    let t = portfolios[0].len();
    let x = design(factors, true);
    let mut alphas = Vec::new();
    let mut resid = Vec::new();
    for p in portfolios {
        let (b, e) = ols(p, &x);
        alphas.push(b[0]);
        resid.push(e);
    }
    let sigma: Mat = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| resid[i].iter().zip(&resid[j]).map(|(a, b)| a * b).sum::<f64>() / (t - k - 1) as f64)
                .collect()
        })
        .collect();
    let mu: Vec<f64> = factors.iter().map(|f| mean(f)).collect();
    let tf = t as f64;
    (tf / n as f64) * ((t - n - k) as f64 / (t - k - 1) as f64) * quad_inv(&sigma, &alphas)
        / (1.0 + quad_inv(&cov_ml(factors), &mu))
}

/// Direct (non-log) evaluation of the Q factor.
pub fn q_direct(w: f64, sh_y: f64, sh_max: f64, t: usize, k: usize, n: usize) -> f64 {
    let a = (1.0 + sh_y) / t as f64;
    let kk = (sh_max - sh_y) / n as f64;
    (1.0 + a / (a + kk) * w / t as f64).powf(-((t - k) as f64) / 2.0) * (1.0 + kk / a).powf(-(n as f64) / 2.0)
}
