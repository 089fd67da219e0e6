use crate::error::{Error, Result};
use crate::federation::{ClientRole, RoundReport};

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix (row-major, `n x n`) by cyclic
/// Jacobi rotations. Returns eigenvalues in descending order and the matching
/// unit eigenvectors.
pub fn jacobi_eigen(matrix: &[f64], n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if matrix.len() != n * n {
        return Err(Error::Shape {
            context: "jacobi_eigen",
            dimension: "matrix size",
            expected: n * n,
            found: matrix.len(),
        });
    }
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    for _ in 0..MAX_SWEEPS {
        if off_norm(&a) <= OFF_DIAGONAL_TOL {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J, touching rows/columns p and q only
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
        .collect();
    Ok((values, vectors))
}

/// Flips `axis` so its largest-magnitude entry is positive.
fn fix_sign(axis: &mut [f64]) {
    let mut best = 0;
    for (i, v) in axis.iter().enumerate() {
        if v.abs() > axis[best].abs() {
            best = i;
        }
    }
    if axis[best] < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Top-two principal components of a set of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub axes: [Vec<f64>; 2],
    /// Sample-covariance eigenvalues, descending and non-negative.
    pub eigenvalues: [f64; 2],
    /// Projection of each centred input onto the two axes.
    pub coords: Vec<[f64; 2]>,
}

pub fn pca_project(vectors: &[Vec<f64>]) -> Result<Pca> {
    if vectors.len() < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 vectors, got {}", vectors.len())));
    }
    let dim = vectors[0].len();
    if dim < 2 {
        return Err(Error::invalid("PCA needs vectors of dimension at least 2"));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::Shape {
            context: "pca_project",
            dimension: "vector length",
            expected: dim,
            found: v.len(),
        });
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let centred: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    let mut cov = vec![0.0; dim * dim];
    for c in &centred {
        for i in 0..dim {
            for j in i..dim {
                cov[i * dim + j] += c[i] * c[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let s = cov[i * dim + j] / (n - 1.0);
            cov[i * dim + j] = s;
            cov[j * dim + i] = s;
        }
    }

    let (values, mut vecs) = jacobi_eigen(&cov, dim)?;
    let mut second = vecs.swap_remove(1);
    let mut first = vecs.swap_remove(0);
    fix_sign(&mut first);
    fix_sign(&mut second);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let coords = centred.iter().map(|c| [dot(c, &first), dot(c, &second)]).collect();
    Ok(Pca {
        mean,
        axes: [first, second],
        eigenvalues: [values[0].max(0.0), values[1].max(0.0)],
        coords,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoint {
    pub client_id: usize,
    pub role: ClientRole,
    pub x: f64,
    pub y: f64,
}

/// Probe vectors of one round projected onto their top-two principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub points: Vec<ProjectedPoint>,
    pub axes: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
}

impl Projection2D {
    pub fn from_report(report: &RoundReport) -> Result<Self> {
        let vectors: Vec<Vec<f64>> = report.probes.iter().map(|p| p.values.clone()).collect();
        let pca = pca_project(&vectors)?;
        let points = report
            .probes
            .iter()
            .zip(&pca.coords)
            .map(|(p, &[x, y])| {
                let role = *report
                    .roles
                    .get(&p.client_id)
                    .ok_or_else(|| Error::invalid(format!("client {} has no role", p.client_id)))?;
                Ok(ProjectedPoint { client_id: p.client_id, role, x, y })
            })
            .collect::<Result<_>>()?;
        Ok(Projection2D {
            points,
            axes: pca.axes,
            eigenvalues: pca.eigenvalues,
        })
    }
}
