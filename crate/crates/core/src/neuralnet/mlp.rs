use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat, Zip};
use num_traits::NumCast;
use rand::Rng;

use super::NnError;

pub const DEFAULT_HIDDEN: [usize; 7] = [50, 70, 200, 350, 200, 350, 600];
pub const OUTPUT_DIM: usize = 500;

pub(crate) fn cast<A: NdFloat>(x: f64) -> A {
    <A as NumCast>::from(x).expect("finite cast")
}

/// Dense layer computing `x W + b`, with `w` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<A> {
    pub w: Array2<A>,
    pub b: Array1<A>,
}

/// ReLU stack with a softmax head. Inputs are standardized with stored
/// per-feature shift and scale before the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<A> {
    pub input_mean: Array1<A>,
    pub input_scale: Array1<A>,
    pub layers: Vec<Layer<A>>,
}

/// Gradients laid out like [`Mlp::layers`].
#[derive(Debug, Clone)]
pub struct Grads<A> {
    pub layers: Vec<Layer<A>>,
}

impl<A: NdFloat> Mlp<A> {
    /// He-uniform weights, zero biases, identity standardization.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if input_dim == 0 || output_dim == 0 || hidden.contains(&0) {
            return Err(NnError::Shape("layer widths must be positive".into()));
        }
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &width in hidden.iter().chain(std::iter::once(&output_dim)) {
            let bound = (6.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, width), |_| {
                cast::<A>(rng.random_range(-bound..bound))
            });
            layers.push(Layer {
                w,
                b: Array1::zeros(width),
            });
            fan_in = width;
        }
        Ok(Mlp {
            input_mean: Array1::zeros(input_dim),
            input_scale: Array1::ones(input_dim),
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").w.ncols()
    }

    /// Widths of every layer after the input, output last.
    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.w.ncols()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Sets the standardization from the column means and standard
    /// deviations of `x`; constant columns keep unit scale.
    pub fn fit_standardization(&mut self, x: ArrayView2<A>) {
        let n = cast::<A>(x.nrows().max(1) as f64);
        let mean = x.sum_axis(Axis(0)) / n;
        let mut scale = Array1::<A>::ones(x.ncols());
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            let var = col.iter().fold(A::zero(), |acc, v| acc + (*v - mean[j]) * (*v - mean[j])) / n;
            let sd = var.sqrt();
            if sd > cast(1e-8) {
                scale[j] = sd;
            }
        }
        self.input_mean = mean;
        self.input_scale = scale;
    }

    fn check_input(&self, x: &ArrayView2<A>) -> Result<(), NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn standardize(&self, x: ArrayView2<A>) -> Array2<A> {
        let mut z = x.to_owned();
        Zip::from(z.rows_mut()).for_each(|mut row| {
            Zip::from(&mut row)
                .and(&self.input_mean)
                .and(&self.input_scale)
                .for_each(|v, m, s| *v = (*v - *m) / *s);
        });
        z
    }

    /// Activations of every layer; the last entry holds the softmax output.
    fn activations(&self, x: ArrayView2<A>) -> Vec<Array2<A>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(self.standardize(x));
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let input = acts.last().expect("input pushed");
            let mut z = Array2::<A>::zeros((input.nrows(), layer.w.ncols()));
            for mut row in z.rows_mut() {
                row.assign(&layer.b);
            }
            general_mat_mul(A::one(), input, &layer.w, A::one(), &mut z);
            if k < last {
                z.mapv_inplace(|v| v.max(A::zero()));
            } else {
                softmax_rows(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Probability rows for a batch of feature rows.
    pub fn infer_batch(&self, x: ArrayView2<A>) -> Result<Array2<A>, NnError> {
        self.check_input(&x)?;
        Ok(self.activations(x).pop().expect("output layer"))
    }

    /// Single-row forward pass.
    pub fn forward(&self, x: &[A]) -> Result<Vec<A>, NnError> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| NnError::Shape(e.to_string()))?;
        Ok(self.infer_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Loss on a batch and its gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<A>,
        y: ArrayView2<A>,
    ) -> Result<(A, Grads<A>), NnError> {
        self.check_input(&x)?;
        let acts = self.activations(x);
        let out = acts.last().expect("output layer");
        let value = super::loss(y, out.view())?;
        let mut delta = super::loss_grad(y, out.view());
        // softmax backward: dz = p * (g - <g, p>)
        Zip::from(delta.rows_mut())
            .and(out.rows())
            .for_each(|mut g, p| {
                let dot = g.dot(&p);
                Zip::from(&mut g).and(&p).for_each(|gv, pv| *gv = *pv * (*gv - dot));
            });
        let mut grads: Vec<Layer<A>> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let input = &acts[k];
            let layer = &self.layers[k];
            let mut gw = Array2::<A>::zeros(layer.w.raw_dim());
            general_mat_mul(A::one(), &input.t(), &delta, A::zero(), &mut gw);
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut prev = Array2::<A>::zeros(input.raw_dim());
                general_mat_mul(A::one(), &delta, &layer.w.t(), A::zero(), &mut prev);
                Zip::from(&mut prev).and(input).for_each(|d, a| {
                    if *a <= A::zero() {
                        *d = A::zero();
                    }
                });
                delta = prev;
            }
            grads.push(Layer { w: gw, b: gb });
        }
        grads.reverse();
        Ok((value, Grads { layers: grads }))
    }

    /// Copy with parameters cast to another float type.
    pub fn cast<B: NdFloat>(&self) -> Mlp<B> {
        let c = |a: &A| cast::<B>(<f64 as NumCast>::from(*a).expect("finite"));
        Mlp {
            input_mean: self.input_mean.map(c),
            input_scale: self.input_scale.map(c),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: l.w.map(c),
                    b: l.b.map(c),
                })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

pub(crate) fn softmax_rows<A: NdFloat>(z: &mut Array2<A>) {
    for mut row in z.rows_mut() {
        let max = row.fold(A::neg_infinity(), |m, v| m.max(*v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use ndarray::{array, s};

    fn small() -> Mlp<f64> {
        Mlp::new(3, &[4, 5], 6, &mut rng_from_seed(1)).unwrap()
    }

    #[test]
    fn output_is_probability_vector() {
        let m = small();
        for x in [[0.0, 1.0, -2.0], [100.0, -50.0, 3.0], [1e3, 1e3, 1e3]] {
            let p = m.forward(&x).unwrap();
            assert!(p.iter().all(|v| *v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_params_give_uniform_output() {
        let mut m: Mlp<f64> = Mlp::new(9, &DEFAULT_HIDDEN, OUTPUT_DIM, &mut rng_from_seed(0)).unwrap();
        for l in &mut m.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        let p = m.forward(&[1.0; 9]).unwrap();
        assert_eq!(p.len(), 500);
        assert!(p.iter().all(|v| (v - 1.0 / 500.0).abs() < 1e-15));
    }

    #[test]
    fn output_bias_shift_is_invisible() {
        let m = small();
        let mut shifted = m.clone();
        shifted.layers.last_mut().unwrap().b += 3.5;
        let x = [0.3, -0.7, 2.0];
        let a = m.forward(&x).unwrap();
        let b = shifted.forward(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn default_architecture_size() {
        let m: Mlp<f32> = Mlp::new(9, &DEFAULT_HIDDEN, OUTPUT_DIM, &mut rng_from_seed(0)).unwrap();
        assert_eq!(m.widths(), vec![50, 70, 200, 350, 200, 350, 600, 500]);
        let dims = [9, 50, 70, 200, 350, 200, 350, 600, 500];
        let want: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        assert_eq!(m.num_params(), want);
    }

    #[test]
    fn batch_rows_are_independent() {
        let m = small();
        let x = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [-2.0, 0.0, 4.0]];
        let batch = m.infer_batch(x.view()).unwrap();
        for i in 0..3 {
            let single = m.forward(x.row(i).to_slice().unwrap()).unwrap();
            assert_eq!(batch.row(i).to_vec(), single);
        }
        let perm = array![[-2.0, 0.0, 4.0], [0.1, 0.2, 0.3], [1.0, -1.0, 0.5]];
        let pb = m.infer_batch(perm.view()).unwrap();
        assert_eq!(pb.row(0), batch.row(2));
        assert_eq!(pb.row(1), batch.row(0));
        assert_eq!(pb.slice(s![2, ..]), batch.slice(s![1, ..]));
    }

    #[test]
    fn dimension_mismatch() {
        let m = small();
        assert!(matches!(m.forward(&[1.0, 2.0]), Err(NnError::Shape(_))));
    }

    #[test]
    fn standardization_uses_column_stats() {
        let mut m = small();
        let x = array![[1.0, 5.0, 0.0], [3.0, 5.0, 2.0]];
        m.fit_standardization(x.view());
        assert_eq!(m.input_mean, array![2.0, 5.0, 1.0]);
        assert_eq!(m.input_scale, array![1.0, 1.0, 1.0]);
        let z = m.standardize(x.view());
        assert_eq!(z, array![[-1.0, 0.0, -1.0], [1.0, 0.0, 1.0]]);
    }
}
