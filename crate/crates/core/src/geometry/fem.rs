use sprs::{CsMat, TriMat};

use super::Mesh;
use crate::error::{Error, Result};

/// Lumped mass (diagonal) and stiffness matrices of the P1 basis.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    pub c_diag: Vec<f64>,
    pub g: CsMat<f64>,
}

impl FemMatrices {
    pub fn mass(&self) -> CsMat<f64> {
        let n = self.c_diag.len();
        let mut t = TriMat::with_capacity((n, n), n);
        for (i, &c) in self.c_diag.iter().enumerate() {
            t.add_triplet(i, i, c);
        }
        t.to_csr()
    }
}

const SLIVER_AREA: f64 = 1e-12;

pub fn fem_matrices(mesh: &Mesh) -> Result<FemMatrices> {
    let n = mesh.n_vertices();
    let mut c_diag = vec![0.0; n];
    let mut g = TriMat::with_capacity((n, n), 9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.triangle_area(t);
        if area < SLIVER_AREA {
            return Err(Error::InvalidMesh(format!("triangle {t} is a sliver (area {area:e})")));
        }
        let p = mesh.triangle_points(t);
        // gradients of the barycentric basis are (b_i, c_i) / (2 area)
        let mut b = [0.0; 3];
        let mut c = [0.0; 3];
        for i in 0..3 {
            let (pj, pk) = (p[(i + 1) % 3], p[(i + 2) % 3]);
            b[i] = pj.y - pk.y;
            c[i] = pk.x - pj.x;
        }
        for i in 0..3 {
            c_diag[tri[i]] += area / 3.0;
            for j in 0..3 {
                g.add_triplet(tri[i], tri[j], (b[i] * b[j] + c[i] * c[j]) / (4.0 * area));
            }
        }
    }
    Ok(FemMatrices { c_diag, g: g.to_csr() })
}

/// 1-D P1 matrices on sorted knots: lumped mass and stiffness.
pub(crate) fn fem_matrices_1d(knots: &[f64]) -> (Vec<f64>, CsMat<f64>) {
    let n = knots.len();
    let mut c = vec![0.0; n];
    let mut g = TriMat::with_capacity((n, n), 4 * n);
    for i in 0..n - 1 {
        let h = knots[i + 1] - knots[i];
        c[i] += h / 2.0;
        c[i + 1] += h / 2.0;
        g.add_triplet(i, i, 1.0 / h);
        g.add_triplet(i + 1, i + 1, 1.0 / h);
        g.add_triplet(i, i + 1, -1.0 / h);
        g.add_triplet(i + 1, i, -1.0 / h);
    }
    (c, g.to_csr())
}
