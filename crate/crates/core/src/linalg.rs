//! Sparse SPD systems on the interior degrees of freedom.

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::mesh::Mesh;
use crate::{Error, Result};

/// Node-to-unknown numbering with boundary nodes eliminated.
#[derive(Debug, Clone)]
pub struct InteriorDofs {
    dof_of_node: Vec<Option<usize>>,
    nodes: Vec<usize>,
}

/// Factored weighted stiffness (plus optional lumped diagonal) on the
/// interior unknowns.
pub struct SpdOperator {
    factor: CscCholesky<f64>,
}

impl InteriorDofs {
    pub fn new(mesh: &Mesh) -> Self {
        let mut dof_of_node = vec![None; mesh.n_nodes()];
        let mut nodes = Vec::new();
        for i in mesh.interior_nodes() {
            dof_of_node[i] = Some(nodes.len());
            nodes.push(i);
        }
        InteriorDofs { dof_of_node, nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Assembles `Σ_e w_e ∫_e ∇ψ_i·∇ψ_j + diag(node_diag)` and factors it.
    pub fn factor(&self, mesh: &Mesh, element_weights: &[f64], node_diag: Option<&[f64]>) -> Result<SpdOperator> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::Linear("mesh has no interior nodes".into()));
        }
        let dim = mesh.dim();
        let mut coo = CooMatrix::new(n, n);
        for (el, &w) in mesh.elements().iter().zip(element_weights) {
            let verts = el.vertices(dim);
            for (a, &va) in verts.iter().enumerate() {
                let Some(ia) = self.dof_of_node[va] else { continue };
                for (b, &vb) in verts.iter().enumerate() {
                    let Some(ib) = self.dof_of_node[vb] else { continue };
                    let g = el.grads[a][0] * el.grads[b][0] + el.grads[a][1] * el.grads[b][1];
                    coo.push(ia, ib, w * el.measure * g);
                }
            }
        }
        if let Some(diag) = node_diag {
            for (i, &node) in self.nodes.iter().enumerate() {
                if diag[node] != 0.0 {
                    coo.push(i, i, diag[node]);
                }
            }
        }
        let csc = CscMatrix::from(&coo);
        let factor = CscCholesky::factor(&csc).map_err(|e| Error::Linear(format!("{e:?}")))?;
        Ok(SpdOperator { factor })
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&i| full[i]).collect()
    }

    pub fn extend(&self, interior: &[f64], n_nodes: usize) -> Vec<f64> {
        let mut full = vec![0.0; n_nodes];
        for (k, &i) in self.nodes.iter().enumerate() {
            full[i] = interior[k];
        }
        full
    }
}

impl SpdOperator {
    /// Solves on the interior rows of `rhs` (full nodal length); the result
    /// vanishes at boundary nodes.
    pub fn solve(&self, dofs: &InteriorDofs, rhs: &[f64]) -> Vec<f64> {
        let b = DMatrix::from_vec(dofs.len(), 1, dofs.restrict(rhs));
        let x = self.factor.solve(&b);
        dofs.extend(x.as_slice(), rhs.len())
    }
}
