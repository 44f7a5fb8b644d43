//! Named parameter storage.

use std::collections::HashMap;

use crate::scalar::Scalar;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<S> {
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

/// Ordered mapping from layer identifiers to weight arrays.
///
/// Insertion order is preserved and defines the flat parameter order used by
/// optimizers and checkpoints.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<S> {
    names: Vec<String>,
    tensors: Vec<ParamTensor<S>>,
    index: HashMap<String, usize>,
}

impl<S: PartialEq> PartialEq for ParamStore<S> {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.tensors == other.tensors
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Adds a tensor; panics on duplicate names (a layer table bug).
    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<S>) -> ParamId {
        let name = name.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data mismatch for {name}"
        );
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(ParamTensor { shape, data });
        ParamId(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor<S> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor<S> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&ParamTensor<S>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamTensor<S>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor<S>> {
        self.tensors.iter_mut()
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = Self::new();
        for (name, t) in self.iter() {
            out.insert(name, t.shape.clone(), vec![S::zero(); t.data.len()]);
        }
        out
    }

    /// True when names and shapes agree.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.names == other.names && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.shape == b.shape)
    }

    /// Flat view position -> (tensor, offset).
    pub fn locate(&self, mut flat: usize) -> Option<(ParamId, usize)> {
        for (i, t) in self.tensors.iter().enumerate() {
            if flat < t.data.len() {
                return Some((ParamId(i), flat));
            }
            flat -= t.data.len();
        }
        None
    }

    pub fn flat_get(&self, flat: usize) -> S {
        let (id, off) = self.locate(flat).expect("flat index in range");
        self.tensors[id.0].data[off]
    }

    pub fn flat_set(&mut self, flat: usize, v: S) {
        let (id, off) = self.locate(flat).expect("flat index in range");
        self.tensors[id.0].data[off] = v;
    }

    /// `self += other` elementwise; layouts must match.
    pub fn accumulate(&mut self, other: &Self) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, factor: S) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (name, t) in self.iter() {
            out.insert(
                name,
                t.shape.clone(),
                t.data.iter().map(|v| T::of(v.as_f64())).collect(),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_indexing_spans_tensors() {
        let mut p = ParamStore::<f64>::new();
        p.insert("a", vec![2], vec![1.0, 2.0]);
        p.insert("b", vec![1, 3], vec![3.0, 4.0, 5.0]);
        assert_eq!(p.scalar_count(), 5);
        assert_eq!(p.flat_get(3), 4.0);
        p.flat_set(4, 9.0);
        assert_eq!(p.by_name("b").unwrap().data, vec![3.0, 4.0, 9.0]);
        assert!(p.locate(5).is_none());
        let z = p.zeros_like();
        assert!(z.same_layout(&p));
        assert_eq!(z.l2_norm(), 0.0);
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_panic() {
        let mut p = ParamStore::<f32>::new();
        p.insert("w", vec![1], vec![0.0]);
        p.insert("w", vec![1], vec![0.0]);
    }
}
