//! Dense row-major float tensor.
//!
//! Parameters and activations are stored as `f32`; reductions accumulate
//! in `f64`. A tensor optionally carries the id of the tape node that
//! produced it, which is how gradients find their way back to it.

use std::sync::Arc;

/// Identifier of a node on a [`super::tape::Tape`].
pub type NodeId = usize;

#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f32>>,
    /// Tape node that produced this tensor, if it is tracked.
    pub(crate) node: Option<NodeId>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor { shape, data: Arc::new(data), node: None }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![0.0; n]), node: None }
    }

    pub fn scalar(v: f32) -> Self {
        Tensor::new(vec![1], vec![v])
    }

    /// 1-D tensor from a slice.
    pub fn from_slice(v: &[f32]) -> Self {
        Tensor::new(vec![v.len()], v.to_vec())
    }

    /// 2-D tensor from rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f32>]) -> Self {
        let m = rows.len();
        let n = if m == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(m * n);
        for r in rows {
            assert_eq!(r.len(), n, "ragged rows in from_rows");
            data.extend_from_slice(r);
        }
        Tensor::new(vec![m, n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to the underlying buffer (copy-on-write if shared).
    /// Only meaningful for untracked tensors such as parameters between
    /// forward passes.
    pub fn data_mut(&mut self) -> &mut [f32] {
        self.node = None;
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn node(&self) -> Option<NodeId> {
        self.node
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// A copy that is cut off from any tape.
    pub fn detached(&self) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.clone(), node: None }
    }

    /// Number of rows for a 2-D tensor, 1 for 1-D.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            r => panic!("rows() on rank-{r} tensor"),
        }
    }

    /// Number of columns for a 2-D tensor, its length for 1-D.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            r => panic!("cols() on rank-{r} tensor"),
        }
    }

    pub fn value_scalar(&self) -> f32 {
        assert_eq!(self.len(), 1, "value_scalar() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn share_data(&self) -> Arc<Vec<f32>> {
        self.data.clone()
    }

    pub(crate) fn from_shared(shape: Vec<usize>, data: Arc<Vec<f32>>, node: Option<NodeId>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data, node }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_matches_data() {
        let t = Tensor::new(vec![2, 3], vec![0.0; 6]);
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.len(), 6);
    }

    #[test]
    #[should_panic(expected = "does not match")]
    fn shape_mismatch_panics() {
        let _ = Tensor::new(vec![2, 2], vec![0.0; 3]);
    }

    #[test]
    fn detached_drops_node() {
        let mut t = Tensor::scalar(1.0);
        t.node = Some(3);
        assert!(t.detached().node().is_none());
    }
}
