//! Negative-sampling logistic loss shared by training and inference.

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Loss and gradient coefficient for one (score, label) pair.
///
/// With `z = h . u` the loss is `-ln s(z)` for label 1 and `-ln s(-z)` for
/// label 0. The returned coefficient `c = label - s(z)` gives
/// `dL/dh = -c u` and `dL/du = -c h`.
#[inline]
pub fn logistic_coeff(z: f64, label: f64) -> (f64, f64) {
    let loss = if label > 0.5 { softplus(-z) } else { softplus(z) };
    (loss, label - sigmoid(z))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Total loss and gradient w.r.t. `h` over a set of (output vector, label)
/// samples, all evaluated at the same `h`.
pub fn objective_and_grad(h: &[f64], samples: &[(&[f64], f64)]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; h.len()];
    let mut total = 0.0;
    for (u, label) in samples {
        let (loss, c) = logistic_coeff(dot(h, u), *label);
        total += loss;
        for (g, ui) in grad.iter_mut().zip(u.iter()) {
            *g -= c * ui;
        }
    }
    (total, grad)
}
