use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{truncated_normal, INIT_STD};
use crate::numcore::{ParamStore, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

/// How a sentence embedding is formed from token embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    MeanPool,
    ClsToken,
}

impl PoolingMode {
    pub fn apply<T: Scalar>(self, tape: &mut Tape<T>, embeddings: Var, mask: &[u8]) -> Result<Var> {
        match self {
            PoolingMode::MeanPool => tape.mean_pool(embeddings, mask),
            PoolingMode::ClsToken => tape.cls_pool(embeddings),
        }
    }
}

/// Pools `[batch, seq, hidden]` embeddings to `[batch, hidden]`.
pub fn pool<T: Scalar>(embeddings: &Tensor<T>, mask: &[u8], mode: PoolingMode) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let e = tape.constant(embeddings.clone());
    let out = mode.apply(&mut tape, e, mask)?;
    Ok(tape.value(out).clone())
}

/// `y = x·W + b` with `W: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
struct Affine<T> {
    params: ParamStore<T>,
}

impl<T: Scalar> Affine<T> {
    fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(Error::ShapeMismatch(weight.shape().to_vec(), bias.shape().to_vec()));
        }
        let mut params = ParamStore::new();
        params.insert("weight", weight);
        params.insert("bias", bias);
        Ok(Self { params })
    }

    fn random<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self::from_parts(truncated_normal(&[d_in, d_out], INIT_STD, rng), Tensor::zeros(&[d_out])).expect("shapes agree")
    }

    fn dims(&self) -> (usize, usize) {
        let s = self.params.tensors()[0].shape();
        (s[0], s[1])
    }

    fn apply(&self, tape: &mut Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        let y = tape.matmul(x, vars[0])?;
        tape.add_bias(y, vars[1])
    }

    fn apply_tensor(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.apply(&mut tape, &vars, xv)?;
        Ok(tape.value(out).clone())
    }
}

macro_rules! affine_wrapper {
    ($name:ident) => {
        impl<T: Scalar> $name<T> {
            pub fn params(&self) -> &ParamStore<T> {
                &self.inner.params
            }

            pub fn params_mut(&mut self) -> &mut ParamStore<T> {
                &mut self.inner.params
            }

            pub fn weight(&self) -> &Tensor<T> {
                &self.inner.params.tensors()[0]
            }

            pub fn bias(&self) -> &Tensor<T> {
                &self.inner.params.tensors()[1]
            }

            /// Applies the map to a value already on `tape`; `vars` come from
            /// binding [`Self::params`].
            pub fn forward(&self, tape: &mut Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
                self.inner.apply(tape, vars, x)
            }

            pub fn cast<U: Scalar>(&self) -> $name<U> {
                $name {
                    inner: Affine {
                        params: self.inner.params.cast(),
                    },
                }
            }
        }
    };
}

/// Linear prediction layer on a pooled sentence embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead<T> {
    inner: Affine<T>,
}

affine_wrapper!(ClassifierHead);

impl<T: Scalar> ClassifierHead<T> {
    pub fn new<R: Rng + ?Sized>(hidden: usize, num_classes: usize, rng: &mut R) -> Self {
        Self {
            inner: Affine::random(hidden, num_classes, rng),
        }
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        Ok(Self {
            inner: Affine::from_parts(weight, bias)?,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.inner.dims().0
    }

    pub fn num_classes(&self) -> usize {
        self.inner.dims().1
    }
}

/// `[batch, hidden] → [batch, classes]`, no activation.
pub fn classify_logits<T: Scalar>(head: &ClassifierHead<T>, pooled: &Tensor<T>) -> Result<Tensor<T>> {
    head.inner.apply_tensor(pooled)
}

/// Learned affine map from the teacher's embedding width to a student's.
#[derive(Clone, Debug, PartialEq)]
pub struct DownsampleProjection<T> {
    inner: Affine<T>,
}

affine_wrapper!(DownsampleProjection);

impl<T: Scalar> DownsampleProjection<T> {
    pub fn new<R: Rng + ?Sized>(teacher_dim: usize, student_dim: usize, rng: &mut R) -> Result<Self> {
        Self::check(teacher_dim, student_dim)?;
        Ok(Self {
            inner: Affine::random(teacher_dim, student_dim, rng),
        })
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let inner = Affine::from_parts(weight, bias)?;
        let (t, s) = inner.dims();
        Self::check(t, s)?;
        Ok(Self { inner })
    }

    fn check(teacher_dim: usize, student_dim: usize) -> Result<()> {
        if student_dim == 0 || student_dim >= teacher_dim {
            return Err(Error::InvalidConfig(format!(
                "projection must shrink: {teacher_dim} → {student_dim}"
            )));
        }
        Ok(())
    }

    pub fn teacher_dim(&self) -> usize {
        self.inner.dims().0
    }

    pub fn student_dim(&self) -> usize {
        self.inner.dims().1
    }
}

/// `[batch, d_T] → [batch, d_S]`.
pub fn project_down<T: Scalar>(projection: &DownsampleProjection<T>, teacher_pooled: &Tensor<T>) -> Result<Tensor<T>> {
    projection.inner.apply_tensor(teacher_pooled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn mean_pool_cases() {
        let emb = t(&[1, 2, 2], &[1.0, 2.0, 30.0, 40.0]);
        assert_eq!(pool(&emb, &[1, 0], PoolingMode::MeanPool).unwrap().data(), &[1.0, 2.0]);
        assert_eq!(pool(&emb, &[1, 1], PoolingMode::MeanPool).unwrap().data(), &[15.5, 21.0]);
        assert!(matches!(pool(&emb, &[0, 0], PoolingMode::MeanPool), Err(Error::EmptySequence)));
    }

    #[test]
    fn cls_ignores_mask() {
        let emb = t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        for mask in [[1, 1, 1, 1], [1, 0, 1, 0]] {
            assert_eq!(pool(&emb, &mask, PoolingMode::ClsToken).unwrap().data(), &[1.0, 3.0]);
        }
    }

    #[test]
    fn classifier_examples() {
        let head = ClassifierHead::from_parts(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]), t(&[2], &[0.5, 0.0])).unwrap();
        let out = classify_logits(&head, &t(&[1, 2], &[1.0, 2.0])).unwrap();
        assert_eq!(out.data(), &[1.5, 2.0]);

        let zero = ClassifierHead::from_parts(Tensor::<f64>::zeros(&[3, 4]), Tensor::zeros(&[4])).unwrap();
        let out = classify_logits(&zero, &t(&[1, 3], &[0.3, -2.0, 9.0])).unwrap();
        assert_eq!(out.data(), &[0.0; 4]);
    }

    #[test]
    fn projection_examples() {
        let p = DownsampleProjection::from_parts(Tensor::<f64>::zeros(&[4, 2]), t(&[2], &[0.5, -1.0])).unwrap();
        let out = project_down(&p, &t(&[2, 4], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])).unwrap();
        assert_eq!(out.data(), &[0.5, -1.0, 0.5, -1.0]);

        // unit rows pairing coordinates (0,1) and (2,3)
        let w = t(&[4, 2], &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let p = DownsampleProjection::from_parts(w, Tensor::zeros(&[2])).unwrap();
        let out = project_down(&p, &t(&[1, 4], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[3.0, 7.0]);

        assert!(DownsampleProjection::<f64>::from_parts(Tensor::zeros(&[2, 2]), Tensor::zeros(&[2])).is_err());
    }
}
