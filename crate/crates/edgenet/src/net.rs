//! Multi-layer edge-varying graph networks: forward pass, analytic
//! reverse-mode gradients for every parameter class, and ADAM training.
//!
//! A layer maps its input features through one filter per (output, input)
//! feature pair, sums over inputs, and applies a pointwise nonlinearity.
//! Trained shift-invariant networks keep their filters inside the admissible
//! parameter family by optimizing basis coefficients directly; general
//! filters are projected back onto the support mask after every step.

use std::io::{BufRead, Write};
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::datagen::{DatasetSplit, Label, LabeledSample};
use crate::error::{Error, Result};
use crate::filters::{
    self, build_si_basis, make_convolutional, make_general, make_node_varying, make_si_params,
    shift_sequence, FilterClass, FilterParams, SIBasis,
};
use crate::graph::GraphShiftOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Relu,
    AbsoluteValue,
    /// Linear pass-through, for diagnostics and gradient oracles.
    Identity,
}

impl Nonlinearity {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::AbsoluteValue => x.abs(),
            Nonlinearity::Identity => x,
        }
    }

    /// Subgradient, with the kink at zero resolved to 0.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::AbsoluteValue => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Identity => 1.0,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Nonlinearity::Relu => "relu",
            Nonlinearity::AbsoluteValue => "abs",
            Nonlinearity::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Nonlinearity::Relu),
            "abs" => Some(Nonlinearity::AbsoluteValue),
            "identity" => Some(Nonlinearity::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutKind {
    /// Mean over nodes per feature, then linear: graph-level outputs.
    MeanPoolLinear,
    /// Shared node-wise linear map producing one value per node.
    PerNodeLinear,
    /// Fully connected layer over the flattened node-feature map.
    DenseLinear,
}

impl ReadoutKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ReadoutKind::MeanPoolLinear => "mean_pool",
            ReadoutKind::PerNodeLinear => "per_node",
            ReadoutKind::DenseLinear => "dense",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "mean_pool" => Some(ReadoutKind::MeanPoolLinear),
            "per_node" => Some(ReadoutKind::PerNodeLinear),
            "dense" => Some(ReadoutKind::DenseLinear),
            _ => None,
        }
    }
}

/// Readout weights. Shapes: mean-pool `(out, F)`, per-node `(1, F)`, dense
/// `(out, n * F)`.
#[derive(Debug, Clone)]
pub struct Readout {
    pub kind: ReadoutKind,
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Readout {
    /// Map final features to the network output (class logits, or one value
    /// per node for the per-node readout).
    pub fn apply(&self, features: &[Array1<f64>]) -> Array1<f64> {
        let n = features[0].len();
        let f_count = features.len();
        match self.kind {
            ReadoutKind::MeanPoolLinear => {
                let pooled =
                    Array1::from_shape_fn(f_count, |f| features[f].sum() / n as f64);
                self.w.dot(&pooled) + &self.b
            }
            ReadoutKind::PerNodeLinear => {
                let mut out = Array1::from_elem(n, self.b[0]);
                for (f, feat) in features.iter().enumerate() {
                    out.scaled_add(self.w[[0, f]], feat);
                }
                out
            }
            ReadoutKind::DenseLinear => {
                let mut flat = Array1::<f64>::zeros(n * f_count);
                for (f, feat) in features.iter().enumerate() {
                    flat.slice_mut(ndarray::s![f * n..(f + 1) * n]).assign(feat);
                }
                self.w.dot(&flat) + &self.b
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EdgeNetConfig {
    pub layers: usize,
    pub features: usize,
    pub order: usize,
    pub class: FilterClass,
    pub nonlinearity: Nonlinearity,
    pub readout: ReadoutKind,
    pub seed: u64,
    pub n: usize,
    pub input_features: usize,
    pub output_features: usize,
    /// Output dimension of the readout (class count, or 1 for regression).
    pub out_dim: usize,
}

impl EdgeNetConfig {
    pub fn new(n: usize, layers: usize, features: usize, order: usize, class: FilterClass) -> Self {
        Self {
            layers,
            features,
            order,
            class,
            nonlinearity: Nonlinearity::Relu,
            readout: ReadoutKind::MeanPoolLinear,
            seed: 0,
            n,
            input_features: 1,
            output_features: features,
            out_dim: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.features == 0 {
            return Err(Error::InvalidParameter("layers and features must be >= 1".into()));
        }
        if self.n == 0 || self.input_features == 0 || self.output_features == 0 {
            return Err(Error::InvalidParameter("empty network shape".into()));
        }
        Ok(())
    }

    /// (input, output) feature counts of layer `l`.
    pub fn layer_dims(&self, l: usize) -> (usize, usize) {
        let fin = if l == 0 { self.input_features } else { self.features };
        let fout = if l + 1 == self.layers { self.output_features } else { self.features };
        (fin, fout)
    }
}

/// Multi-layer edge-varying network. `filters[l][f][g]` maps input feature
/// `g` to output feature `f` of layer `l`.
#[derive(Debug, Clone)]
pub struct EdgeNet {
    pub config: EdgeNetConfig,
    filters: Vec<Vec<Vec<FilterParams>>>,
    readout: Option<Readout>,
    si_basis: Option<Arc<SIBasis>>,
}

/// Per-layer forward state kept for backpropagation.
#[derive(Debug)]
struct LayerCache {
    /// `shifts[g][k] = S^k x^g` for every input feature.
    shifts: Vec<Vec<Array1<f64>>>,
    /// Pre-nonlinearity outputs per output feature.
    preacts: Vec<Array1<f64>>,
}

/// Cached activations from one forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    features: Vec<Array1<f64>>,
}

impl ForwardCache {
    /// Final pre-readout features.
    pub fn features(&self) -> &[Array1<f64>] {
        &self.features
    }
}

/// Gradient of one filter, matching its parameter class.
#[derive(Debug, Clone)]
pub enum FilterGrad {
    Scalars(Vec<f64>),
    Diagonals(Vec<Array1<f64>>),
    Alphas(Vec<Array1<f64>>),
    Dense(Vec<Array2<f64>>),
}

impl FilterGrad {
    fn zeros_like(params: &FilterParams) -> Self {
        let k = params.order() + 1;
        let n = params.n();
        match params.class() {
            FilterClass::Convolutional => FilterGrad::Scalars(vec![0.0; k]),
            FilterClass::NodeVarying => FilterGrad::Diagonals(vec![Array1::zeros(n); k]),
            FilterClass::ShiftInvariant => {
                let p = params
                    .si_coefficients()
                    .map(|c| c.basis.dim())
                    .expect("trained SI filters carry basis coefficients");
                FilterGrad::Alphas(vec![Array1::zeros(p); k])
            }
            _ => FilterGrad::Dense(vec![Array2::zeros((n, n)); k]),
        }
    }

    fn add_assign(&mut self, other: &FilterGrad) {
        match (self, other) {
            (FilterGrad::Scalars(a), FilterGrad::Scalars(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y)
            }
            (FilterGrad::Diagonals(a), FilterGrad::Diagonals(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y)
            }
            (FilterGrad::Alphas(a), FilterGrad::Alphas(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y)
            }
            (FilterGrad::Dense(a), FilterGrad::Dense(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y)
            }
            _ => panic!("mismatched gradient classes"),
        }
    }

    fn scale(&mut self, c: f64) {
        match self {
            FilterGrad::Scalars(a) => a.iter_mut().for_each(|x| *x *= c),
            FilterGrad::Diagonals(a) => a.iter_mut().for_each(|x| *x *= c),
            FilterGrad::Alphas(a) => a.iter_mut().for_each(|x| *x *= c),
            FilterGrad::Dense(a) => a.iter_mut().for_each(|x| *x *= c),
        }
    }
}

/// Full parameter gradient of the network.
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub filters: Vec<Vec<Vec<FilterGrad>>>,
    pub readout_w: Array2<f64>,
    pub readout_b: Array1<f64>,
}

impl NetGrads {
    pub fn zeros_like(net: &EdgeNet) -> Self {
        let filters = net
            .filters
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|row| row.iter().map(FilterGrad::zeros_like).collect())
                    .collect()
            })
            .collect();
        let (rw, rb) = match &net.readout {
            Some(r) => (Array2::zeros(r.w.dim()), Array1::zeros(r.b.len())),
            None => (Array2::zeros((0, 0)), Array1::zeros(0)),
        };
        NetGrads { filters, readout_w: rw, readout_b: rb }
    }

    pub fn add_assign(&mut self, other: &NetGrads) {
        for (la, lb) in self.filters.iter_mut().zip(&other.filters) {
            for (ra, rb) in la.iter_mut().zip(lb) {
                for (ga, gb) in ra.iter_mut().zip(rb) {
                    ga.add_assign(gb);
                }
            }
        }
        self.readout_w += &other.readout_w;
        self.readout_b += &other.readout_b;
    }

    pub fn scale(&mut self, c: f64) {
        for layer in &mut self.filters {
            for row in layer {
                for g in row {
                    g.scale(c);
                }
            }
        }
        self.readout_w *= c;
        self.readout_b *= c;
    }
}

impl EdgeNet {
    /// Randomly initialized network of the configured class.
    ///
    /// Eigenvector-sharing networks train in their node-varying (diagonal)
    /// instance; shift-invariant networks train basis coefficients over the
    /// admissible family of `s`, so shift invariance holds exactly
    /// throughout training.
    pub fn random(config: EdgeNetConfig, s: &GraphShiftOperator) -> Result<Self> {
        config.validate()?;
        if config.n != s.n() {
            return Err(Error::DimensionMismatch { expected: s.n(), got: config.n });
        }
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let n = config.n;
        let k = config.order + 1;
        let si_basis = match config.class {
            FilterClass::ShiftInvariant => Some(Arc::new(build_si_basis(s))),
            _ => None,
        };
        let mut layer_filters = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let (fin, fout) = config.layer_dims(l);
            let scale = 1.0 / ((fin * k) as f64).sqrt();
            let mut rows = Vec::with_capacity(fout);
            for _ in 0..fout {
                let mut row = Vec::with_capacity(fin);
                for _ in 0..fin {
                    let params = match config.class {
                        FilterClass::Convolutional => {
                            let taps: Vec<f64> = (0..k)
                                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                                .collect();
                            make_convolutional(&taps, n)?
                        }
                        FilterClass::NodeVarying | FilterClass::EigenvectorSharing => {
                            let diags: Vec<Array1<f64>> = (0..k)
                                .map(|_| {
                                    Array1::from_shape_fn(n, |_| {
                                        scale * rng.sample::<f64, _>(StandardNormal)
                                    })
                                })
                                .collect();
                            make_node_varying(diags)?
                        }
                        FilterClass::ShiftInvariant => {
                            let basis = si_basis.as_ref().unwrap();
                            let p = basis.dim();
                            let alpha_scale = scale * (n as f64 / p as f64).sqrt();
                            let alphas: Vec<Array1<f64>> = (0..k)
                                .map(|_| {
                                    Array1::from_shape_fn(p, |_| {
                                        alpha_scale * rng.sample::<f64, _>(StandardNormal)
                                    })
                                })
                                .collect();
                            make_si_params(basis, alphas)?
                        }
                        FilterClass::General => {
                            let entry_scale = scale / (n as f64).sqrt();
                            let mats: Vec<Array2<f64>> = (0..k)
                                .map(|_| {
                                    Array2::from_shape_fn((n, n), |_| {
                                        entry_scale * rng.sample::<f64, _>(StandardNormal)
                                    })
                                })
                                .collect();
                            make_general(mats, Some(s.support().clone()))?
                        }
                    };
                    row.push(params);
                }
                rows.push(row);
            }
            layer_filters.push(rows);
        }
        let readout = Some(random_readout(&config, &mut rng));
        Ok(Self { config, filters: layer_filters, readout, si_basis })
    }

    /// Assemble a network from externally built filters (for controlled
    /// experiments). `readout = None` yields a feature-level network.
    pub fn from_filters(
        config: EdgeNetConfig,
        filters: Vec<Vec<Vec<FilterParams>>>,
        readout: Option<Readout>,
    ) -> Result<Self> {
        config.validate()?;
        if filters.len() != config.layers {
            return Err(Error::DimensionMismatch { expected: config.layers, got: filters.len() });
        }
        for (l, layer) in filters.iter().enumerate() {
            let (fin, fout) = config.layer_dims(l);
            if layer.len() != fout || layer.iter().any(|row| row.len() != fin) {
                return Err(Error::InvalidParameter(format!("layer {l} filter grid shape")));
            }
            for row in layer {
                for p in row {
                    if p.n() != config.n || p.order() != config.order {
                        return Err(Error::InvalidParameter(format!(
                            "layer {l} filter dims {}x{} vs config",
                            p.n(),
                            p.order()
                        )));
                    }
                }
            }
        }
        Ok(Self { config, filters, readout, si_basis: None })
    }

    pub fn filters(&self) -> &Vec<Vec<Vec<FilterParams>>> {
        &self.filters
    }

    pub fn readout(&self) -> Option<&Readout> {
        self.readout.as_ref()
    }

    /// Forward pass through the filter layers, caching everything backward
    /// needs. Inputs are the layer-0 features.
    pub fn forward_features(
        &self,
        s: &GraphShiftOperator,
        inputs: &[Array1<f64>],
    ) -> Result<ForwardCache> {
        if inputs.len() != self.config.input_features {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_features,
                got: inputs.len(),
            });
        }
        if inputs.iter().any(|x| x.len() != self.config.n) {
            return Err(Error::DimensionMismatch { expected: self.config.n, got: 0 });
        }
        let mut current: Vec<Array1<f64>> = inputs.to_vec();
        let mut layers = Vec::with_capacity(self.config.layers);
        for layer in &self.filters {
            let shifts: Vec<Vec<Array1<f64>>> = current
                .iter()
                .map(|x| shift_sequence(s, x, self.config.order))
                .collect();
            let mut preacts = Vec::with_capacity(layer.len());
            let mut outputs = Vec::with_capacity(layer.len());
            for row in layer {
                let mut pre = Array1::<f64>::zeros(self.config.n);
                for (g, params) in row.iter().enumerate() {
                    pre += &params.apply_shifted(&shifts[g]);
                }
                let out = pre.mapv(|x| self.config.nonlinearity.apply(x));
                preacts.push(pre);
                outputs.push(out);
            }
            layers.push(LayerCache { shifts, preacts });
            current = outputs;
        }
        Ok(ForwardCache { layers, features: current })
    }

    /// Forward pass through filters and readout.
    pub fn forward(
        &self,
        s: &GraphShiftOperator,
        inputs: &[Array1<f64>],
    ) -> Result<(Array1<f64>, ForwardCache)> {
        let cache = self.forward_features(s, inputs)?;
        let readout = self.readout.as_ref().ok_or(Error::MissingCache)?;
        let out = readout.apply(&cache.features);
        Ok((out, cache))
    }

    /// Forward pass with a substitute operator and unchanged parameters.
    pub fn perturbed_inference(
        &self,
        tilde: &GraphShiftOperator,
        inputs: &[Array1<f64>],
    ) -> Result<ForwardCache> {
        self.forward_features(tilde, inputs)
    }

    /// Reverse-mode gradients for all filter parameters and the readout.
    ///
    /// `s` must be the operator used in the forward pass that produced
    /// `cache`; `output_grad` is the loss gradient with respect to the
    /// readout output.
    pub fn backward(
        &self,
        s: &GraphShiftOperator,
        cache: &ForwardCache,
        output_grad: &Array1<f64>,
    ) -> Result<NetGrads> {
        let readout = self.readout.as_ref().ok_or(Error::MissingCache)?;
        let mut grads = NetGrads::zeros_like(self);
        let n = self.config.n;

        // readout backward
        let features = &cache.features;
        let f_count = features.len();
        let mut feat_grads: Vec<Array1<f64>> = vec![Array1::zeros(n); f_count];
        match readout.kind {
            ReadoutKind::MeanPoolLinear => {
                let pooled =
                    Array1::from_shape_fn(f_count, |f| features[f].sum() / n as f64);
                for o in 0..readout.w.nrows() {
                    for f in 0..f_count {
                        grads.readout_w[[o, f]] += output_grad[o] * pooled[f];
                    }
                }
                grads.readout_b += output_grad;
                for f in 0..f_count {
                    let mut coeff = 0.0;
                    for o in 0..readout.w.nrows() {
                        coeff += output_grad[o] * readout.w[[o, f]];
                    }
                    feat_grads[f] += &Array1::from_elem(n, coeff / n as f64);
                }
            }
            ReadoutKind::PerNodeLinear => {
                for f in 0..f_count {
                    grads.readout_w[[0, f]] += output_grad.dot(&features[f]);
                    feat_grads[f].scaled_add(readout.w[[0, f]], output_grad);
                }
                grads.readout_b[0] += output_grad.sum();
            }
            ReadoutKind::DenseLinear => {
                for o in 0..readout.w.nrows() {
                    for f in 0..f_count {
                        for i in 0..n {
                            grads.readout_w[[o, f * n + i]] += output_grad[o] * features[f][i];
                            feat_grads[f][i] += output_grad[o] * readout.w[[o, f * n + i]];
                        }
                    }
                }
                grads.readout_b += output_grad;
            }
        }

        self.backward_features(s, cache, feat_grads, &mut grads)?;
        Ok(grads)
    }

    /// Reverse-mode gradients starting from gradients of the final features
    /// (no readout involved).
    pub fn backward_from_features(
        &self,
        s: &GraphShiftOperator,
        cache: &ForwardCache,
        feature_grads: Vec<Array1<f64>>,
    ) -> Result<NetGrads> {
        let mut grads = NetGrads::zeros_like(self);
        self.backward_features(s, cache, feature_grads, &mut grads)?;
        Ok(grads)
    }

    fn backward_features(
        &self,
        s: &GraphShiftOperator,
        cache: &ForwardCache,
        mut feat_grads: Vec<Array1<f64>>,
        grads: &mut NetGrads,
    ) -> Result<()> {
        if cache.layers.len() != self.config.layers {
            return Err(Error::MissingCache);
        }
        for l in (0..self.config.layers).rev() {
            let layer_cache = &cache.layers[l];
            let (fin, fout) = self.config.layer_dims(l);
            // delta_f = dL/d(preact_f)
            let deltas: Vec<Array1<f64>> = (0..fout)
                .map(|f| {
                    let mut d = feat_grads[f].clone();
                    for (x, pre) in d.iter_mut().zip(layer_cache.preacts[f].iter()) {
                        *x *= self.config.nonlinearity.derivative(*pre);
                    }
                    d
                })
                .collect();

            // shared spectral projections for trained SI layers
            let si_ctx = self.si_basis.as_ref().map(|basis| {
                let v = basis.eigenbasis();
                let proj_deltas: Vec<Array1<f64>> =
                    deltas.iter().map(|d| v.t().dot(d)).collect();
                let proj_shifts: Vec<Vec<Array1<f64>>> = layer_cache
                    .shifts
                    .iter()
                    .map(|zs| zs.iter().map(|z| v.t().dot(z)).collect())
                    .collect();
                (basis.clone(), proj_deltas, proj_shifts)
            });

            let mut input_grads: Vec<Array1<f64>> = vec![Array1::zeros(self.config.n); fin];
            for f in 0..fout {
                for g in 0..fin {
                    let params = &self.filters[l][f][g];
                    let shifts = &layer_cache.shifts[g];
                    match &mut grads.filters[l][f][g] {
                        FilterGrad::Scalars(gs) => {
                            for k in 0..=self.config.order {
                                gs[k] += deltas[f].dot(&shifts[k]);
                            }
                        }
                        FilterGrad::Diagonals(gd) => {
                            for k in 0..=self.config.order {
                                gd[k] += &(&deltas[f] * &shifts[k]);
                            }
                        }
                        FilterGrad::Alphas(ga) => {
                            let (basis, proj_deltas, proj_shifts) =
                                si_ctx.as_ref().expect("SI layer context");
                            for k in 0..=self.config.order {
                                let omega_grad = &proj_deltas[f] * &proj_shifts[g][k];
                                ga[k] += &basis.vectors().t().dot(&omega_grad);
                            }
                        }
                        FilterGrad::Dense(gm) => {
                            for k in 0..=self.config.order {
                                // rank-one accumulation delta z^T
                                let delta = &deltas[f];
                                let z = &shifts[k];
                                let m = &mut gm[k];
                                for i in 0..self.config.n {
                                    let di = delta[i];
                                    if di == 0.0 {
                                        continue;
                                    }
                                    for j in 0..self.config.n {
                                        m[[i, j]] += di * z[j];
                                    }
                                }
                            }
                        }
                    }
                    if l > 0 {
                        // dL/dx^g += sum_k S^k Phi^(k)^T delta_f, by Horner
                        let mut w = params.matrix_t_apply(self.config.order, &deltas[f]);
                        for k in (0..self.config.order).rev() {
                            w = s.shift(&w) + params.matrix_t_apply(k, &deltas[f]);
                        }
                        input_grads[g] += &w;
                    }
                }
            }
            feat_grads = input_grads;
        }
        Ok(())
    }

    /// Flattened parameter vector: filters in layer/output/input order, then
    /// readout weights row-major and biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.filters {
            for row in layer {
                for params in row {
                    match params.class() {
                        FilterClass::Convolutional => {
                            out.extend_from_slice(params.scalars().unwrap())
                        }
                        FilterClass::NodeVarying => {
                            for k in 0..=params.order() {
                                out.extend(params.matrix(k).diag().iter());
                            }
                        }
                        FilterClass::ShiftInvariant => {
                            let si = params.si_coefficients().unwrap();
                            for a in &si.alphas {
                                out.extend(a.iter());
                            }
                        }
                        _ => {
                            for k in 0..=params.order() {
                                out.extend(params.matrix(k).iter());
                            }
                        }
                    }
                }
            }
        }
        if let Some(r) = &self.readout {
            out.extend(r.w.iter());
            out.extend(r.b.iter());
        }
        out
    }

    /// Write back a parameter vector from [`flat_params`](Self::flat_params).
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let mut pos = 0usize;
        let mut take = |count: usize| -> Result<std::ops::Range<usize>> {
            let range = pos..pos + count;
            if range.end > flat.len() {
                return Err(Error::DimensionMismatch { expected: range.end, got: flat.len() });
            }
            pos = range.end;
            Ok(range)
        };
        let n = self.config.n;
        let order = self.config.order;
        for layer in &mut self.filters {
            for row in layer {
                for params in row {
                    match params.class() {
                        FilterClass::Convolutional => {
                            let r = take(order + 1)?;
                            let taps = params.scalars_mut().unwrap();
                            taps.copy_from_slice(&flat[r]);
                        }
                        FilterClass::NodeVarying => {
                            let diags = params.diagonals_mut().unwrap();
                            for d in diags.iter_mut() {
                                let r = take(n)?;
                                d.assign(&Array1::from_iter(flat[r].iter().copied()));
                            }
                        }
                        FilterClass::ShiftInvariant => {
                            let p = params.si_coefficients().unwrap().basis.dim();
                            let mut alphas = Vec::with_capacity(order + 1);
                            for _ in 0..=order {
                                let r = take(p)?;
                                alphas.push(Array1::from_iter(flat[r].iter().copied()));
                            }
                            params.set_si_alphas(alphas);
                        }
                        _ => {
                            let mats = params.dense_mut().unwrap();
                            for m in mats.iter_mut() {
                                for i in 0..n {
                                    let r = take(n)?;
                                    for (j, v) in flat[r.clone()].iter().enumerate() {
                                        m[[i, j]] = *v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if let Some(r) = &mut self.readout {
            let (rw, rh) = r.w.dim();
            let range = take(rw * rh)?;
            for (idx, v) in flat[range].iter().enumerate() {
                r.w[[idx / rh, idx % rh]] = *v;
            }
            let range = take(r.b.len())?;
            for (idx, v) in flat[range].iter().enumerate() {
                r.b[idx] = *v;
            }
        }
        if pos != flat.len() {
            return Err(Error::DimensionMismatch { expected: pos, got: flat.len() });
        }
        Ok(())
    }

    /// Flatten gradients in [`flat_params`](Self::flat_params) order.
    pub fn flatten_grads(&self, grads: &NetGrads) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &grads.filters {
            for row in layer {
                for g in row {
                    match g {
                        FilterGrad::Scalars(v) => out.extend_from_slice(v),
                        FilterGrad::Diagonals(ds) => {
                            ds.iter().for_each(|d| out.extend(d.iter()))
                        }
                        FilterGrad::Alphas(als) => {
                            als.iter().for_each(|a| out.extend(a.iter()))
                        }
                        FilterGrad::Dense(ms) => ms.iter().for_each(|m| out.extend(m.iter())),
                    }
                }
            }
        }
        out.extend(grads.readout_w.iter());
        out.extend(grads.readout_b.iter());
        out
    }

    /// Project general-class parameters back onto their support masks.
    pub fn project_support(&mut self) {
        for layer in &mut self.filters {
            for row in layer {
                for params in row {
                    if params.class() == FilterClass::General {
                        if let Some(mask) = params.support().cloned() {
                            if let Some(mats) = params.dense_mut() {
                                for m in mats.iter_mut() {
                                    mask.project(m);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn random_readout(config: &EdgeNetConfig, rng: &mut ChaCha20Rng) -> Readout {
    let f = config.output_features;
    let n = config.n;
    let (rows, cols, out_len) = match config.readout {
        ReadoutKind::MeanPoolLinear => (config.out_dim, f, config.out_dim),
        ReadoutKind::PerNodeLinear => (1, f, 1),
        ReadoutKind::DenseLinear => (config.out_dim, n * f, config.out_dim),
    };
    let scale = 1.0 / (cols as f64).sqrt();
    let w = Array2::from_shape_fn((rows, cols), |_| scale * rng.sample::<f64, _>(StandardNormal));
    let b = Array1::zeros(out_len);
    Readout { kind: config.readout, w, b }
}

/// Softmax cross-entropy loss and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Array1<f64>, class: usize) -> (f64, Array1<f64>) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exps = logits.mapv(|x| (x - max).exp());
    let sum: f64 = exps.sum();
    let probs = exps / sum;
    let loss = -(probs[class].max(1e-300)).ln();
    let mut grad = probs;
    grad[class] -= 1.0;
    (loss, grad)
}

/// Squared error at one node of a per-node prediction vector.
pub fn squared_error_at(pred: &Array1<f64>, node: usize, target: f64) -> (f64, Array1<f64>) {
    let diff = pred[node] - target;
    let mut grad = Array1::zeros(pred.len());
    grad[node] = 2.0 * diff;
    (diff * diff, grad)
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 40,
            batch_size: 64,
            shuffle_seed: 0,
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

/// ADAM moment state, shaped like the parameter gradients.
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl AdamState {
    pub fn new(net: &EdgeNet) -> Self {
        let len = net.flat_params().len();
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// One ADAM update over the flattened parameter vector.
    pub fn step(&mut self, net: &mut EdgeNet, grads: &NetGrads, opts: &TrainOptions) {
        self.t += 1;
        let flat_grads = net.flatten_grads(grads);
        let mut params = net.flat_params();
        let bc1 = 1.0 - opts.beta1.powi(self.t as i32);
        let bc2 = 1.0 - opts.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = flat_grads[i];
            self.m[i] = opts.beta1 * self.m[i] + (1.0 - opts.beta1) * g;
            self.v[i] = opts.beta2 * self.v[i] + (1.0 - opts.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= opts.learning_rate * m_hat / (v_hat.sqrt() + opts.epsilon);
        }
        net.set_flat_params(&params).expect("parameter shape is stable");
        net.project_support();
    }
}

fn sample_loss_and_grads(
    net: &EdgeNet,
    s: &GraphShiftOperator,
    sample: &LabeledSample,
    target_node: Option<usize>,
) -> Result<(f64, NetGrads)> {
    let inputs = vec![sample.signal.clone()];
    let (out, cache) = net.forward(s, &inputs)?;
    let (loss, grad) = match &sample.label {
        Label::Class(c) => softmax_cross_entropy(&out, *c),
        Label::Value(t) => {
            let node = target_node.ok_or_else(|| {
                Error::InvalidParameter("regression labels need a target node".into())
            })?;
            squared_error_at(&out, node, *t)
        }
    };
    let grads = net.backward(s, &cache, &grad)?;
    Ok((loss, grads))
}

/// Classification accuracy (argmax of the readout logits).
pub fn accuracy(net: &EdgeNet, s: &GraphShiftOperator, samples: &[LabeledSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let hits: usize = samples
        .par_iter()
        .map(|sample| {
            let (out, _) = net.forward(s, &[sample.signal.clone()]).expect("forward");
            let pred = out
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            match sample.label {
                Label::Class(c) => usize::from(pred == c),
                Label::Value(_) => 0,
            }
        })
        .sum();
    Ok(hits as f64 / samples.len() as f64)
}

/// Root-mean-square error of per-node predictions at `target_node`.
pub fn rmse(
    net: &EdgeNet,
    s: &GraphShiftOperator,
    samples: &[LabeledSample],
    target_node: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let sq_sum: f64 = samples
        .par_iter()
        .map(|sample| {
            let (out, _) = net.forward(s, &[sample.signal.clone()]).expect("forward");
            match sample.label {
                Label::Value(t) => (out[target_node] - t).powi(2),
                Label::Class(_) => 0.0,
            }
        })
        .sum();
    Ok((sq_sum / samples.len() as f64).sqrt())
}

/// ADAM training over a dataset split. Returns the per-epoch loss curve and
/// validation metric (accuracy for classification, negative RMSE for
/// regression, so larger is always better).
pub fn train(
    net: &mut EdgeNet,
    s: &GraphShiftOperator,
    split: &DatasetSplit,
    opts: &TrainOptions,
) -> Result<TrainLog> {
    if split.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let target_node = split.target_node;
    let mut adam = AdamState::new(net);
    let mut rng = ChaCha20Rng::seed_from_u64(opts.shuffle_seed);
    let mut log = TrainLog { epochs: Vec::with_capacity(opts.epochs) };
    let mut indices: Vec<usize> = (0..split.train.len()).collect();
    for epoch in 0..opts.epochs {
        use rand::seq::SliceRandom;
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in indices.chunks(opts.batch_size.max(1)) {
            let results: Result<Vec<(f64, NetGrads)>> = batch
                .par_iter()
                .map(|&i| sample_loss_and_grads(net, s, &split.train[i], target_node))
                .collect();
            let results = results?;
            let mut total = NetGrads::zeros_like(net);
            for (loss, grads) in &results {
                epoch_loss += loss;
                total.add_assign(grads);
            }
            if opts.learning_rate > 0.0 {
                total.scale(1.0 / batch.len() as f64);
                adam.step(net, &total, opts);
            }
        }
        let validation_metric = match target_node {
            Some(node) => -rmse(net, s, &split.validation, node)?,
            None => accuracy(net, s, &split.validation)?,
        };
        log.epochs.push(EpochLog {
            epoch,
            train_loss: epoch_loss / split.train.len() as f64,
            validation_metric,
        });
    }
    Ok(log)
}

/// Plain-text checkpoint: config header, filter blocks, readout matrix.
pub fn save_checkpoint<W: Write>(net: &EdgeNet, mut w: W) -> Result<()> {
    writeln!(w, "edgenet-checkpoint v1")?;
    let c = &net.config;
    writeln!(
        w,
        "layers {} features {} order {} class {} nonlinearity {} readout {} seed {} n {} input_features {} output_features {} out_dim {}",
        c.layers,
        c.features,
        c.order,
        c.class.tag(),
        c.nonlinearity.tag(),
        c.readout.tag(),
        c.seed,
        c.n,
        c.input_features,
        c.output_features,
        c.out_dim
    )?;
    for layer in &net.filters {
        for row in layer {
            for params in row {
                filters::save_filter(params, &mut w)?;
            }
        }
    }
    match &net.readout {
        Some(r) => {
            writeln!(w, "readout {} {} {}", r.kind.tag(), r.w.nrows(), r.w.ncols())?;
            for i in 0..r.w.nrows() {
                let row: Vec<String> = r.w.row(i).iter().map(|x| x.to_string()).collect();
                writeln!(w, "{}", row.join(" "))?;
            }
            let b: Vec<String> = r.b.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", b.join(" "))?;
        }
        None => writeln!(w, "readout none 0 0")?,
    }
    Ok(())
}

/// Load a checkpoint for inference. Shift-invariant filters come back with
/// dense parameter matrices (identical action, no trainable coefficients).
pub fn load_checkpoint<R: BufRead>(mut r: R) -> Result<EdgeNet> {
    let mut magic = String::new();
    r.read_line(&mut magic)?;
    if magic.trim() != "edgenet-checkpoint v1" {
        return Err(Error::Parse { line: 1, msg: "bad checkpoint magic".into() });
    }
    let mut header = String::new();
    r.read_line(&mut header)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let mut fields = std::collections::HashMap::new();
    for pair in tokens.chunks(2) {
        if pair.len() == 2 {
            fields.insert(pair[0].to_string(), pair[1].to_string());
        }
    }
    let get = |key: &str| -> Result<String> {
        fields
            .get(key)
            .cloned()
            .ok_or_else(|| Error::Parse { line: 2, msg: format!("missing field {key}") })
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::Parse { line: 2, msg: format!("bad field {key}") })
    };
    let class = FilterClass::from_tag(&get("class")?)
        .ok_or_else(|| Error::Parse { line: 2, msg: "bad class".into() })?;
    let config = EdgeNetConfig {
        layers: parse_usize("layers")?,
        features: parse_usize("features")?,
        order: parse_usize("order")?,
        class,
        nonlinearity: Nonlinearity::from_tag(&get("nonlinearity")?)
            .ok_or_else(|| Error::Parse { line: 2, msg: "bad nonlinearity".into() })?,
        readout: ReadoutKind::from_tag(&get("readout")?)
            .ok_or_else(|| Error::Parse { line: 2, msg: "bad readout".into() })?,
        seed: get("seed")?
            .parse()
            .map_err(|_| Error::Parse { line: 2, msg: "bad seed".into() })?,
        n: parse_usize("n")?,
        input_features: parse_usize("input_features")?,
        output_features: parse_usize("output_features")?,
        out_dim: parse_usize("out_dim")?,
    };
    let mut filters_nested = Vec::with_capacity(config.layers);
    for l in 0..config.layers {
        let (fin, fout) = config.layer_dims(l);
        let mut rows = Vec::with_capacity(fout);
        for _ in 0..fout {
            let mut row = Vec::with_capacity(fin);
            for _ in 0..fin {
                row.push(filters::load_filter(&mut r)?);
            }
            rows.push(row);
        }
        filters_nested.push(rows);
    }
    let mut readout_header = String::new();
    r.read_line(&mut readout_header)?;
    let tokens: Vec<&str> = readout_header.split_whitespace().collect();
    if tokens.len() != 4 || tokens[0] != "readout" {
        return Err(Error::Parse { line: 0, msg: "bad readout header".into() });
    }
    let readout = if tokens[1] == "none" {
        None
    } else {
        let kind = ReadoutKind::from_tag(tokens[1])
            .ok_or_else(|| Error::Parse { line: 0, msg: "bad readout kind".into() })?;
        let rows: usize =
            tokens[2].parse().map_err(|_| Error::Parse { line: 0, msg: "bad rows".into() })?;
        let cols: usize =
            tokens[3].parse().map_err(|_| Error::Parse { line: 0, msg: "bad cols".into() })?;
        let mut w_mat = Array2::<f64>::zeros((rows, cols));
        for i in 0..rows {
            let mut line = String::new();
            r.read_line(&mut line)?;
            let vals: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(|t| t.parse::<f64>()).collect();
            let vals = vals.map_err(|_| Error::Parse { line: 0, msg: "bad weight row".into() })?;
            if vals.len() != cols {
                return Err(Error::Parse { line: 0, msg: "short weight row".into() });
            }
            for (j, v) in vals.into_iter().enumerate() {
                w_mat[[i, j]] = v;
            }
        }
        let mut line = String::new();
        r.read_line(&mut line)?;
        let b: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(|t| t.parse::<f64>()).collect();
        let b = b.map_err(|_| Error::Parse { line: 0, msg: "bad bias row".into() })?;
        Some(Readout { kind, w: w_mat, b: Array1::from_vec(b) })
    };
    EdgeNet::from_filters(config, filters_nested, readout)
}

/// Verify the normalized-Lipschitz contract of a nonlinearity on random
/// pairs: `sigma(0) = 0` and `|sigma(a) - sigma(b)| <= |a - b|`.
pub fn check_nonlinearity_contract(sigma: Nonlinearity, trials: usize, seed: u64) -> bool {
    if sigma.apply(0.0) != 0.0 {
        return false;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let a = rng.random::<f64>() * 20.0 - 10.0;
        let b = rng.random::<f64>() * 20.0 - 10.0;
        if (sigma.apply(a) - sigma.apply(b)).abs() > (a - b).abs() + 1e-15 {
            return false;
        }
    }
    true
}

pub use crate::linalg::norm2 as signal_norm;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::SampleMeta;
    use crate::linalg;
    use crate::graph::build_sbm;
    use ndarray::array;

    fn ones_conv_identity_net(n: usize) -> (EdgeNetConfig, Vec<Vec<Vec<FilterParams>>>) {
        let mut config = EdgeNetConfig::new(n, 1, 1, 2, FilterClass::Convolutional);
        config.output_features = 1;
        let filt = make_convolutional(&[1.0, 0.0, 0.0], n).unwrap();
        (config, vec![vec![vec![filt]]])
    }

    #[test]
    fn identity_filter_relu_passes_nonnegative_input() {
        let s = build_sbm(12, 3, 0.9, 0.3, 1).unwrap();
        let (config, filters) = ones_conv_identity_net(12);
        let net = EdgeNet::from_filters(config, filters, None).unwrap();
        let x = Array1::from_shape_fn(12, |i| i as f64 / 12.0);
        let cache = net.forward_features(&s, &[x.clone()]).unwrap();
        assert!(linalg::norm2(&(&cache.features()[0] - &x)) < 1e-14);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let s = build_sbm(10, 2, 0.9, 0.4, 2).unwrap();
        let mut config = EdgeNetConfig::new(10, 2, 3, 2, FilterClass::General);
        config.out_dim = 4;
        config.seed = 5;
        let mut net = EdgeNet::random(config, &s).unwrap();
        let zeros = vec![0.0; net.flat_params().len()];
        net.set_flat_params(&zeros).unwrap();
        let x = Array1::from_elem(10, 0.7);
        let cache = net.forward_features(&s, &[x]).unwrap();
        for f in cache.features() {
            assert!(f.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn forward_matches_naive_recomputation() {
        // independent re-computation with dense matrix powers and no caching
        let s = build_sbm(9, 3, 0.9, 0.4, 3).unwrap();
        let mut config = EdgeNetConfig::new(9, 2, 2, 2, FilterClass::General);
        config.seed = 7;
        config.out_dim = 3;
        let net = EdgeNet::random(config.clone(), &s).unwrap();
        let x = Array1::from_shape_fn(9, |i| ((i * 7) % 5) as f64 / 5.0 - 0.4);

        let mut powers = vec![Array2::<f64>::eye(9)];
        for k in 1..=config.order {
            let next = powers[k - 1].dot(s.matrix());
            powers.push(next);
        }
        let mut current = vec![x.clone()];
        for l in 0..config.layers {
            let (fin, fout) = config.layer_dims(l);
            let mut next = Vec::new();
            for f in 0..fout {
                let mut pre = Array1::<f64>::zeros(9);
                for g in 0..fin {
                    for k in 0..=config.order {
                        let phi = net.filters()[l][f][g].matrix(k);
                        pre += &phi.dot(&powers[k]).dot(&current[g]);
                    }
                }
                next.push(pre.mapv(|v| config.nonlinearity.apply(v)));
            }
            current = next;
        }

        let cache = net.forward_features(&s, &[x]).unwrap();
        for (a, b) in cache.features().iter().zip(&current) {
            assert!(linalg::norm2(&(a - b)) < 1e-12);
        }
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradients() {
        let s = build_sbm(8, 2, 0.9, 0.5, 4).unwrap();
        let mut config = EdgeNetConfig::new(8, 1, 2, 2, FilterClass::NodeVarying);
        config.out_dim = 2;
        config.seed = 11;
        let net = EdgeNet::random(config, &s).unwrap();
        let x = Array1::from_elem(8, 0.3);
        let (_, cache) = net.forward(&s, &[x]).unwrap();
        let grads = net.backward(&s, &cache, &Array1::zeros(2)).unwrap();
        assert!(net.flatten_grads(&grads).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_single_layer_matches_least_squares_gradient() {
        // identity nonlinearity, per-node readout with w = 1, b = 0:
        // gradient of 0.5 ||y - t||^2 w.r.t. conv taps is X^T (X h - t)
        let s = build_sbm(5, 1, 0.9, 0.9, 6).unwrap();
        let mut config = EdgeNetConfig::new(5, 1, 1, 1, FilterClass::Convolutional);
        config.nonlinearity = Nonlinearity::Identity;
        config.readout = ReadoutKind::PerNodeLinear;
        config.output_features = 1;
        let taps = [0.4, -0.3];
        let filt = make_convolutional(&taps, 5).unwrap();
        let readout =
            Readout { kind: ReadoutKind::PerNodeLinear, w: array![[1.0]], b: array![0.0] };
        let net = EdgeNet::from_filters(config, vec![vec![vec![filt]]], Some(readout)).unwrap();

        let x = Array1::from_shape_fn(5, |i| (i as f64) / 3.0 - 0.5);
        let t = Array1::from_shape_fn(5, |i| ((i * i) as f64) / 10.0 - 0.6);
        let (y, cache) = net.forward(&s, &[x.clone()]).unwrap();
        // loss L = 0.5 ||y - t||^2, dL/dy = y - t
        let grads = net.backward(&s, &cache, &(&y - &t)).unwrap();
        let flat = net.flatten_grads(&grads);

        let design = [x.clone(), s.shift(&x)];
        let residual = &y - &t;
        for (k, col) in design.iter().enumerate() {
            let want = col.dot(&residual);
            assert!(
                (flat[k] - want).abs() < 1e-10,
                "tap {k}: {} vs {want}",
                flat[k]
            );
        }
    }

    fn fd_check(net: &mut EdgeNet, s: &GraphShiftOperator, label: usize, coords: usize, seed: u64) {
        let x = {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            Array1::from_shape_fn(net.config.n, |_| rng.random::<f64>() * 2.0 - 1.0)
        };
        let inputs = vec![x];
        let loss_of = |net: &EdgeNet| -> f64 {
            let (out, _) = net.forward(s, &inputs).unwrap();
            softmax_cross_entropy(&out, label).0
        };
        let (out, cache) = net.forward(s, &inputs).unwrap();
        let (_, grad_out) = softmax_cross_entropy(&out, label);
        let grads = net.backward(s, &cache, &grad_out).unwrap();
        let flat_grads = net.flatten_grads(&grads);
        let base = net.flat_params();
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xfd);
        let h = 1e-5;
        for _ in 0..coords {
            let idx = rng.random_range(0..base.len());
            let mut plus = base.clone();
            plus[idx] += h;
            net.set_flat_params(&plus).unwrap();
            let lp = loss_of(net);
            let mut minus = base.clone();
            minus[idx] -= h;
            net.set_flat_params(&minus).unwrap();
            let lm = loss_of(net);
            net.set_flat_params(&base).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let g = flat_grads[idx];
            let denom = g.abs().max(fd.abs()).max(1e-4);
            assert!(
                (fd - g).abs() / denom < 1e-5,
                "coord {idx}: fd {fd} vs analytic {g}"
            );
        }
    }

    #[test]
    fn finite_difference_gradients_all_classes() {
        let s = build_sbm(8, 2, 0.9, 0.5, 8).unwrap();
        for class in [
            FilterClass::Convolutional,
            FilterClass::NodeVarying,
            FilterClass::ShiftInvariant,
            FilterClass::General,
        ] {
            for layers in [1usize, 2] {
                let mut config = EdgeNetConfig::new(8, layers, 2, 2, class);
                config.out_dim = 3;
                config.seed = 17 + layers as u64;
                config.readout = ReadoutKind::MeanPoolLinear;
                let mut net = EdgeNet::random(config, &s).unwrap();
                fd_check(&mut net, &s, 1, 20, 100 + layers as u64);
            }
        }
    }

    #[test]
    fn finite_difference_dense_readout() {
        let s = build_sbm(8, 2, 0.9, 0.5, 9).unwrap();
        let mut config = EdgeNetConfig::new(8, 2, 2, 2, FilterClass::Convolutional);
        config.out_dim = 3;
        config.seed = 23;
        config.readout = ReadoutKind::DenseLinear;
        let mut net = EdgeNet::random(config, &s).unwrap();
        fd_check(&mut net, &s, 2, 20, 200);
    }

    #[test]
    fn nonlinearity_contracts() {
        for sigma in [Nonlinearity::Relu, Nonlinearity::AbsoluteValue, Nonlinearity::Identity] {
            assert!(check_nonlinearity_contract(sigma, 200, 4));
        }
        assert_eq!(Nonlinearity::Relu.derivative(0.0), 0.0);
        assert_eq!(Nonlinearity::AbsoluteValue.derivative(0.0), 0.0);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let s = build_sbm(10, 2, 0.9, 0.4, 10).unwrap();
        let mut config = EdgeNetConfig::new(10, 1, 2, 2, FilterClass::Convolutional);
        config.out_dim = 2;
        config.seed = 3;
        let mut net = EdgeNet::random(config, &s).unwrap();
        let before = net.flat_params();
        let split = tiny_classification_split(&s, 6, 2, 12);
        let opts = TrainOptions { learning_rate: 0.0, epochs: 3, ..Default::default() };
        train(&mut net, &s, &split, &opts).unwrap();
        assert_eq!(before, net.flat_params());
    }

    #[test]
    fn overfits_a_single_sample() {
        let s = build_sbm(10, 2, 0.9, 0.4, 11).unwrap();
        let mut config = EdgeNetConfig::new(10, 1, 4, 2, FilterClass::NodeVarying);
        config.out_dim = 2;
        config.seed = 4;
        let mut net = EdgeNet::random(config, &s).unwrap();
        let split = tiny_classification_split(&s, 1, 2, 13);
        let opts = TrainOptions { epochs: 60, learning_rate: 5e-3, ..Default::default() };
        let log = train(&mut net, &s, &split, &opts).unwrap();
        let first = log.epochs.first().unwrap().train_loss;
        let last = log.epochs.last().unwrap().train_loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
        // monotone after warmup: the tail stays below the initial loss
        for e in log.epochs.iter().skip(log.epochs.len() / 2) {
            assert!(e.train_loss < first);
        }
    }

    #[test]
    fn default_architecture_shape_instantiates() {
        // one filter layer of 32 filters, order 5, plus a softmax readout
        let s = build_sbm(30, 3, 0.8, 0.2, 12).unwrap();
        let mut config = EdgeNetConfig::new(30, 1, 32, 5, FilterClass::NodeVarying);
        config.out_dim = 3;
        config.readout = ReadoutKind::DenseLinear;
        let net = EdgeNet::random(config, &s).unwrap();
        let x = Array1::from_elem(30, 0.1);
        let (out, _) = net.forward(&s, &[x]).unwrap();
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn perturbed_inference_identity_when_unperturbed() {
        let s = build_sbm(12, 3, 0.9, 0.3, 13).unwrap();
        let mut config = EdgeNetConfig::new(12, 2, 2, 2, FilterClass::General);
        config.seed = 5;
        let net = EdgeNet::random(config, &s).unwrap();
        let x = Array1::from_elem(12, 0.4);
        let a = net.forward_features(&s, &[x.clone()]).unwrap();
        let b = net.perturbed_inference(&s, &[x]).unwrap();
        for (fa, fb) in a.features().iter().zip(b.features()) {
            assert_eq!(fa, fb);
        }
    }

    #[test]
    fn convolutional_network_is_permutation_equivariant() {
        let s = build_sbm(12, 3, 0.9, 0.3, 14).unwrap();
        let mut config = EdgeNetConfig::new(12, 2, 2, 3, FilterClass::Convolutional);
        config.seed = 6;
        let net = EdgeNet::random(config, &s).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let x = Array1::from_shape_fn(12, |_| rng.random::<f64>() - 0.5);
        let mut perm: Vec<usize> = (0..12).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let mut p = Array2::<f64>::zeros((12, 12));
        for (i, &pi) in perm.iter().enumerate() {
            p[[i, pi]] = 1.0;
        }
        let sp =
            GraphShiftOperator::from_matrix(p.t().dot(s.matrix()).dot(&p)).unwrap();
        let a = net.forward_features(&sp, &[p.t().dot(&x)]).unwrap();
        let b = net.forward_features(&s, &[x]).unwrap();
        for (fa, fb) in a.features().iter().zip(b.features()) {
            let permuted = p.t().dot(fb);
            assert!(linalg::norm2(&(fa - &permuted)) < 1e-8);
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_inference() {
        let s = build_sbm(10, 2, 0.9, 0.4, 16).unwrap();
        for class in [FilterClass::Convolutional, FilterClass::ShiftInvariant] {
            let mut config = EdgeNetConfig::new(10, 2, 2, 2, class);
            config.out_dim = 3;
            config.seed = 21;
            let net = EdgeNet::random(config, &s).unwrap();
            let mut buf = Vec::new();
            save_checkpoint(&net, &mut buf).unwrap();
            let loaded = load_checkpoint(buf.as_slice()).unwrap();
            let x = Array1::from_shape_fn(10, |i| (i as f64) / 7.0 - 0.6);
            let (a, _) = net.forward(&s, &[x.clone()]).unwrap();
            let (b, _) = loaded.forward(&s, &[x]).unwrap();
            assert!(linalg::norm2(&(&a - &b)) < 1e-10);
        }
    }

    fn tiny_classification_split(
        s: &GraphShiftOperator,
        train: usize,
        classes: usize,
        seed: u64,
    ) -> DatasetSplit {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let make = |rng: &mut ChaCha20Rng, count: usize| -> Vec<LabeledSample> {
            (0..count)
                .map(|i| LabeledSample {
                    signal: Array1::from_shape_fn(s.n(), |_| rng.random::<f64>() - 0.5),
                    label: Label::Class(i % classes),
                    meta: SampleMeta::default(),
                })
                .collect()
        };
        DatasetSplit {
            train: make(&mut rng, train),
            validation: make(&mut rng, 2),
            test: make(&mut rng, 2),
            seed,
            target_node: None,
            classes: Some(classes),
            description: "tiny-random".into(),
        }
    }
}
