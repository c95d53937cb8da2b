//! Two-branch feed-forward network.
//!
//! The nonparametric inputs pass through the hidden stack; the top layer is
//! linear in the last hidden layer concatenated with the parametric inputs:
//!
//! `f(wp, u) = b0 + [V1(u) | wp] . c`, `V_l = act(gamma_l + V_{l+1} G_l)`,
//! with the bottom layer fed by `u`. With no hidden layers the raw
//! nonparametric inputs enter the top layer directly.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation output `a = act(z)`.
    #[inline]
    fn slope<T: Real>(self, a: T) -> T {
        match self {
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
            Activation::Sigmoid => a * (T::one() - a),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub nonparametric_inputs: usize,
    pub parametric_inputs: usize,
    /// Widths from the bottom (input side) up.
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub fn top_width(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.nonparametric_inputs)
    }

    pub fn n_params(&self) -> usize {
        let mut fan_in = self.nonparametric_inputs;
        let mut n = 0;
        for &h in &self.hidden {
            n += fan_in * h + h;
            fan_in = h;
        }
        n + self.top_width() + self.parametric_inputs + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Layer<T: Real> {
    /// `fan_in x width`
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SdnnModel<T: Real> {
    pub arch: Architecture,
    pub layers: Vec<Layer<T>>,
    /// Coefficients over `[V1 | wp]`.
    pub top: Array1<T>,
    pub intercept: T,
    pub weight_decay: T,
}

/// Architecture plus flat parameter array, for export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportedNetwork {
    pub arch: Architecture,
    pub weight_decay: f64,
    pub params: Vec<f64>,
}

impl<T: Real> SdnnModel<T> {
    pub fn zeros(arch: Architecture) -> Self {
        let mut fan_in = arch.nonparametric_inputs;
        let layers = arch
            .hidden
            .iter()
            .map(|&h| {
                let l = Layer { weights: Array2::zeros((fan_in, h)), bias: Array1::zeros(h) };
                fan_in = h;
                l
            })
            .collect();
        let top = Array1::zeros(arch.top_width() + arch.parametric_inputs);
        Self { arch, layers, top, intercept: T::zero(), weight_decay: T::zero() }
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn init<R: Rng>(arch: Architecture, rng: &mut R) -> Self {
        let mut m = Self::zeros(arch);
        let draw = |fan_in: usize, rng: &mut R| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            T::lit(rng.random_range(-bound..bound))
        };
        for layer in &mut m.layers {
            let fan_in = layer.weights.nrows();
            layer.weights.mapv_inplace(|_| draw(fan_in, rng));
            layer.bias.mapv_inplace(|_| draw(fan_in, rng));
        }
        let fan_in = m.top.len();
        m.top.mapv_inplace(|_| draw(fan_in, rng));
        m.intercept = draw(fan_in, rng);
        m
    }

    pub fn validate(&self) -> Result<()> {
        let mut fan_in = self.arch.nonparametric_inputs;
        if self.layers.len() != self.arch.hidden.len() {
            return Err(Error::Shape("layer count differs from architecture".into()));
        }
        for (l, &h) in self.layers.iter().zip(&self.arch.hidden) {
            if l.weights.dim() != (fan_in, h) || l.bias.len() != h {
                return Err(Error::Shape(format!(
                    "layer is {:?}+{}, expected ({fan_in}, {h})+{h}",
                    l.weights.dim(),
                    l.bias.len()
                )));
            }
            fan_in = h;
        }
        if self.top.len() != self.arch.top_width() + self.arch.parametric_inputs {
            return Err(Error::Shape("top layer width mismatch".into()));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.arch.n_params()
    }

    /// Parameters in export order: per layer weights (row-major) then bias,
    /// then top coefficients, then intercept.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out.extend(self.top.iter().copied());
        out.push(self.intercept);
        out
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!("{} parameters, expected {}", flat.len(), self.n_params())));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = it.next().unwrap());
            l.bias.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        self.top.iter_mut().for_each(|v| *v = it.next().unwrap());
        self.intercept = it.next().unwrap();
        Ok(())
    }

    pub fn export(&self) -> ExportedNetwork {
        ExportedNetwork {
            arch: self.arch.clone(),
            weight_decay: self.weight_decay.as_f64(),
            params: self.params().into_iter().map(Real::as_f64).collect(),
        }
    }

    pub fn from_export(e: &ExportedNetwork) -> Result<Self> {
        let mut m = Self::zeros(e.arch.clone());
        let flat: Vec<T> = e.params.iter().map(|&v| T::lit(v)).collect();
        m.set_params(&flat)?;
        m.weight_decay = T::lit(e.weight_decay);
        Ok(m)
    }

    /// Single-row evaluation on split inputs.
    pub fn forward_split(&self, nonparametric: &[T], parametric: &[T]) -> Result<T> {
        if nonparametric.len() != self.arch.nonparametric_inputs || parametric.len() != self.arch.parametric_inputs {
            return Err(Error::Shape(format!(
                "inputs ({}, {}), network expects ({}, {})",
                nonparametric.len(),
                parametric.len(),
                self.arch.nonparametric_inputs,
                self.arch.parametric_inputs
            )));
        }
        Ok(self.eval_row(nonparametric, parametric))
    }

    pub(crate) fn eval_row(&self, nonparametric: &[T], parametric: &[T]) -> T {
        let mut a: Vec<T> = nonparametric.to_vec();
        for l in &self.layers {
            let mut next: Vec<T> = l.bias.to_vec();
            for (i, &ai) in a.iter().enumerate() {
                if ai != T::zero() {
                    for (n, &w) in next.iter_mut().zip(l.weights.row(i)) {
                        *n += ai * w;
                    }
                }
            }
            next.iter_mut().for_each(|v| *v = self.arch.activation.apply(*v));
            a = next;
        }
        let w = a.len();
        let mut out = self.intercept;
        for (v, c) in a.iter().zip(self.top.iter()) {
            out += *v * *c;
        }
        for (v, c) in parametric.iter().zip(self.top.iter().skip(w)) {
            out += *v * *c;
        }
        out
    }

    /// Batch forward pass. Returns predictions and, for backprop, the
    /// activations of every hidden layer (bottom first).
    pub(crate) fn forward_batch(
        &self,
        nonparametric: ArrayView2<'_, T>,
        parametric: ArrayView2<'_, T>,
    ) -> (Array1<T>, Vec<Array2<T>>) {
        let mut acts: Vec<Array2<T>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let input = acts.last().map_or(nonparametric, |a| a.view());
            let mut z = input.dot(&l.weights);
            z += &l.bias;
            z.mapv_inplace(|v| self.arch.activation.apply(v));
            acts.push(z);
        }
        let tw = self.arch.top_width();
        let top_hidden = self.top.slice(s![..tw]);
        let top_param = self.top.slice(s![tw..]);
        let last = acts.last().map_or(nonparametric, |a| a.view());
        let mut out = last.dot(&top_hidden);
        out += &parametric.dot(&top_param);
        out += self.intercept;
        (out, acts)
    }

    /// Weighted loss `sum_i w_i e_i^2 / sum_i w_i + decay * ||params||^2`
    /// and its gradient in [`Self::params`] order.
    pub fn loss_and_gradient(
        &self,
        nonparametric: ArrayView2<'_, T>,
        parametric: ArrayView2<'_, T>,
        targets: &[T],
        weights: &[T],
    ) -> (T, Vec<T>) {
        let (pred, acts) = self.forward_batch(nonparametric, parametric);
        let total: T = weights.iter().copied().sum();
        let two = T::lit(2.0);
        let mut loss = T::zero();
        let mut dout = Array1::<T>::zeros(targets.len());
        for i in 0..targets.len() {
            let e = pred[i] - targets[i];
            loss += weights[i] * e * e;
            dout[i] = two * weights[i] * e / total;
        }
        loss /= total;

        let tw = self.arch.top_width();
        let last = acts.last().map_or(nonparametric, |a| a.view());
        let g_top_hidden = last.t().dot(&dout);
        let g_top_param = parametric.t().dot(&dout);
        let g_intercept: T = dout.iter().copied().sum();

        let mut layer_grads: Vec<(Array2<T>, Array1<T>)> = Vec::with_capacity(self.layers.len());
        if !self.layers.is_empty() {
            // delta at the top hidden layer
            let top_hidden = self.top.slice(s![..tw]);
            let mut delta = dout.view().insert_axis(Axis(1)).dot(&top_hidden.insert_axis(Axis(0)));
            for l in (0..self.layers.len()).rev() {
                let act = self.arch.activation;
                delta.zip_mut_with(&acts[l], |d, &a| *d *= act.slope(a));
                let input = if l == 0 { nonparametric } else { acts[l - 1].view() };
                let gw = input.t().dot(&delta);
                let gb = delta.sum_axis(Axis(0));
                let next = if l > 0 { Some(delta.dot(&self.layers[l].weights.t())) } else { None };
                layer_grads.push((gw, gb));
                if let Some(n) = next {
                    delta = n;
                }
            }
            layer_grads.reverse();
        }

        let mut grad = Vec::with_capacity(self.n_params());
        for (gw, gb) in &layer_grads {
            grad.extend(gw.iter().copied());
            grad.extend(gb.iter().copied());
        }
        grad.extend(g_top_hidden.iter().copied());
        grad.extend(g_top_param.iter().copied());
        grad.push(g_intercept);

        if self.weight_decay > T::zero() {
            let params = self.params();
            let mut penalty = T::zero();
            for (g, p) in grad.iter_mut().zip(&params) {
                penalty += *p * *p;
                *g += two * self.weight_decay * *p;
            }
            loss += self.weight_decay * penalty;
        }
        (loss, grad)
    }
}

/// Evaluates the network on one observation: the nonparametric branch gets
/// `x` followed by `wn`, the top layer gets `wp`.
pub fn sdnn_forward<T: Real>(model: &SdnnModel<T>, wp: &[T], wn: &[T], x: &[T]) -> Result<T> {
    let mut u = Vec::with_capacity(x.len() + wn.len());
    u.extend_from_slice(x);
    u.extend_from_slice(wn);
    model.forward_split(&u, wp)
}
