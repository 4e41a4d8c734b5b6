use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::{ParamId, ParamStore};
use crate::nn::tape::{Tape, Var};

/// Fully connected layer `x·W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.insert_uniform(&format!("{prefix}.w"), vec![fan_in, fan_out], fan_in, rng)?;
        let b = store.insert_uniform(&format!("{prefix}.b"), vec![fan_out], fan_in, rng)?;
        Ok(Dense {
            w,
            b,
            fan_in,
            fan_out,
        })
    }

    pub fn lookup(store: &ParamStore, prefix: &str) -> Result<Self> {
        let w = store.require(&format!("{prefix}.w"))?;
        let b = store.require(&format!("{prefix}.b"))?;
        let shape = store.value(w).shape();
        if shape.len() != 2 {
            return Err(Error::Artifact(format!("{prefix}.w is not a matrix")));
        }
        Ok(Dense {
            w,
            b,
            fan_in: shape[0],
            fan_out: shape[1],
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        let xw = tape.matmul(x, w)?;
        tape.add_bias(xw, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalActivation {
    Relu,
    Linear,
}

/// Stack of dense layers with ReLU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
    last: FinalActivation,
}

impl Mlp {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        widths: &[usize],
        last: FinalActivation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Dense::register(store, &format!("{prefix}.{i}"), fan_in, w, rng)?);
            fan_in = w;
        }
        Ok(Mlp { layers, last })
    }

    pub fn lookup(store: &ParamStore, prefix: &str, depth: usize, last: FinalActivation) -> Result<Self> {
        let layers = (0..depth)
            .map(|i| Dense::lookup(store, &format!("{prefix}.{i}")))
            .collect::<Result<_>>()?;
        Ok(Mlp { layers, last })
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.last().map(|l| l.fan_out)
    }

    pub fn forward(&self, tape: &mut Tape, mut x: Var) -> Result<Var> {
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, x)?;
            if i + 1 < n || self.last == FinalActivation::Relu {
                x = tape.relu(x);
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn dense_out(x: &[f64], w: Vec<Vec<f64>>, b: Vec<f64>) -> Vec<f64> {
        let mut s = ParamStore::new();
        s.insert("d.w", Tensor::from_rows(&w)).unwrap();
        s.insert("d.b", Tensor::vector(b)).unwrap();
        let d = Dense::lookup(&s, "d").unwrap();
        let mut t = Tape::new(&s);
        let xv = t.constant(1, x.len(), x.to_vec()).unwrap();
        let y = d.forward(&mut t, xv).unwrap();
        t.value(y).to_vec()
    }

    #[test]
    fn dense_examples() {
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(dense_out(&[1.0, 2.0], id, vec![0.0, 0.0]), vec![1.0, 2.0]);
        let z = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert_eq!(dense_out(&[1.0, 2.0], z, vec![3.0, 4.0]), vec![3.0, 4.0]);
        let w = vec![vec![2.0, 3.0], vec![4.0, 5.0]];
        assert_eq!(dense_out(&[1.0, 1.0], w, vec![1.0, 1.0]), vec![7.0, 9.0]);
    }

    #[test]
    fn dense_shape_mismatch() {
        let mut s = ParamStore::new();
        s.insert("d.w", Tensor::zeros(vec![3, 2])).unwrap();
        s.insert("d.b", Tensor::zeros(vec![2])).unwrap();
        let d = Dense::lookup(&s, "d").unwrap();
        let mut t = Tape::new(&s);
        let x = t.constant(1, 2, vec![1.0, 2.0]).unwrap();
        let err = d.forward(&mut t, x).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }
}
