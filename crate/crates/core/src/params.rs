//! Named learnable tensors and non-learnable buffers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BufferId(pub(crate) usize);

/// A tensor with its dotted name and the block that owns it.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub block: String,
    pub tensor: Tensor<T>,
}

/// All learnable weights of an instantiated network plus the batch-norm
/// running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<T> {
    params: Vec<NamedTensor<T>>,
    buffers: Vec<NamedTensor<T>>,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn empty() -> Self {
        ParameterSet {
            params: Vec::new(),
            buffers: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of learnable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].tensor
    }

    pub fn entry(&self, id: ParamId) -> &NamedTensor<T> {
        &self.params[id.0]
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor<T> {
        &self.buffers[id.0].tensor
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Tensor<T> {
        &mut self.buffers[id.0].tensor
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &NamedTensor<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (BufferId, &NamedTensor<T>)> {
        self.buffers.iter().enumerate().map(|(i, p)| (BufferId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn find_buffer(&self, name: &str) -> Option<BufferId> {
        self.buffers.iter().position(|p| p.name == name).map(BufferId)
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.tensor.all_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        let conv = |v: &Vec<NamedTensor<T>>| {
            v.iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    block: p.block.clone(),
                    tensor: p.tensor.cast(),
                })
                .collect()
        };
        ParameterSet {
            params: conv(&self.params),
            buffers: conv(&self.buffers),
        }
    }

    /// Overwrites values from `other`, which must have identical names and shapes.
    pub fn copy_values_from(&mut self, other: &ParameterSet<T>) -> Result<()> {
        let same = |a: &[NamedTensor<T>], b: &[NamedTensor<T>]| {
            a.len() == b.len()
                && a.iter()
                    .zip(b)
                    .all(|(x, y)| x.name == y.name && x.tensor.shape() == y.tensor.shape())
        };
        if !same(&self.params, &other.params) || !same(&self.buffers, &other.buffers) {
            return Err(Error::Checkpoint("parameter layout differs".into()));
        }
        self.params.clone_from(&other.params);
        self.buffers.clone_from(&other.buffers);
        Ok(())
    }
}

/// Registers parameters with seeded initialisation.
pub struct ParamBuilder<T> {
    set: ParameterSet<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> ParamBuilder<T> {
    pub fn new(seed: u64) -> Self {
        ParamBuilder {
            set: ParameterSet::empty(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn push(&mut self, name: String, block: &str, tensor: Tensor<T>) -> ParamId {
        debug_assert!(self.set.find(&name).is_none(), "duplicate parameter {name}");
        self.set.params.push(NamedTensor {
            name,
            block: block.to_string(),
            tensor,
        });
        ParamId(self.set.params.len() - 1)
    }

    /// Convolution weight `(cout, cin, k, k)` with fan-in Kaiming scaling.
    pub fn conv_weight(&mut self, name: String, block: &str, cout: usize, cin: usize, k: usize) -> ParamId {
        let fan_in = (cin * k * k) as f64;
        let std = (2.0 / fan_in).sqrt();
        let len = cout * cin * k * k;
        let data = (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                T::from_f64_lossy(z * std)
            })
            .collect();
        let t = Tensor::from_vec([cout, cin, k, k], data).expect("weight shape");
        self.push(name, block, t)
    }

    pub fn constant(&mut self, name: String, block: &str, len: usize, value: f64) -> ParamId {
        self.push(name, block, Tensor::filled([len, 1, 1, 1], T::from_f64_lossy(value)))
    }

    pub fn buffer(&mut self, name: String, block: &str, len: usize, value: f64) -> BufferId {
        self.set.buffers.push(NamedTensor {
            name,
            block: block.to_string(),
            tensor: Tensor::filled([len, 1, 1, 1], T::from_f64_lossy(value)),
        });
        BufferId(self.set.buffers.len() - 1)
    }

    pub fn finish(self) -> ParameterSet<T> {
        self.set
    }
}
