use serde::Serialize;

use super::AnalysisError;

pub const PCA_TOLERANCE: f64 = 1e-10;
pub const PCA_MAX_ITERATIONS: usize = 10_000;

/// A fitted projection onto the top `k` principal directions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm, mutually orthogonal; largest-magnitude coordinate positive.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the sample covariance (divisor `n - 1`).
    pub explained_variance: Vec<f64>,
}

impl Pca {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect()
    }
}

fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let d = dot(v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x -= d * y;
        }
    }
}

/// Fixed, non-symmetric start so that no coordinate axis or simple diagonal
/// is orthogonal to it.
fn start_vector(d: usize) -> Vec<f64> {
    (0..d).map(|j| 1.0 + 0.5 * ((j + 1) as f64).sin()).collect()
}

fn sign_normalize(v: &mut [f64]) {
    let pivot = v
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
        .map(|(_, x)| x)
        .unwrap_or(0.0);
    if pivot < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Sample covariance of the rows of `points` around `mean`.
pub fn covariance(points: &[Vec<f64>], mean: &[f64]) -> Vec<Vec<f64>> {
    let d = mean.len();
    let mut c = vec![vec![0.0; d]; d];
    for p in points {
        for i in 0..d {
            let di = p[i] - mean[i];
            for j in i..d {
                c[i][j] += di * (p[j] - mean[j]);
            }
        }
    }
    let denom = (points.len() - 1) as f64;
    for i in 0..d {
        for j in i..d {
            c[i][j] /= denom;
            c[j][i] = c[i][j];
        }
    }
    c
}

/// Top-`k` principal components by power iteration with deflation.
///
/// Iteration stops when the eigen-residual `‖Cv − λv‖` falls below
/// `PCA_TOLERANCE · trace(C)`.
pub fn pca_fit(points: &[Vec<f64>], k: usize) -> Result<Pca, AnalysisError> {
    if points.len() < k + 1 {
        return Err(AnalysisError::TooFewPoints {
            needed: k + 1,
            found: points.len(),
        });
    }
    let d = points[0].len();
    if k > d || points.iter().any(|p| p.len() != d) {
        return Err(AnalysisError::Dimension { expected: d.max(k) });
    }
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = covariance(points, &mean);
    let scale = (0..d).map(|i| cov[i][i]).sum::<f64>();
    let threshold = PCA_TOLERANCE * scale.max(f64::MIN_POSITIVE);

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v = start_vector(d);
        orthogonalize(&mut v, &components);
        let n0 = norm(&v);
        for x in &mut v {
            *x /= n0;
        }
        let mut lambda = 0.0;
        let mut converged = false;
        let mut residual = f64::INFINITY;
        for _ in 0..PCA_MAX_ITERATIONS {
            let cv = matvec(&cov, &v);
            lambda = dot(&v, &cv);
            residual = cv.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
            if residual <= threshold {
                converged = true;
                break;
            }
            let mut w = cv;
            orthogonalize(&mut w, &components);
            let nw = norm(&w);
            if nw <= threshold {
                // Remaining spectrum is numerically zero; v is as good as any.
                lambda = 0.0;
                converged = true;
                break;
            }
            v = w.into_iter().map(|x| x / nw).collect();
        }
        if !converged {
            return Err(AnalysisError::NoConvergence {
                component: components.len(),
                residual,
            });
        }
        sign_normalize(&mut v);
        for i in 0..d {
            for j in 0..d {
                cov[i][j] -= lambda * v[i] * v[j];
            }
        }
        components.push(v);
        variances.push(lambda.max(0.0));
    }
    Ok(Pca {
        mean,
        components,
        explained_variance: variances,
    })
}

/// Fits a `k`-component PCA and projects every point.
pub fn pca_project(points: &[Vec<f64>], k: usize) -> Result<(Vec<Vec<f64>>, Pca), AnalysisError> {
    let pca = pca_fit(points, k)?;
    let projections = points.iter().map(|p| pca.project(p)).collect();
    Ok((projections, pca))
}
