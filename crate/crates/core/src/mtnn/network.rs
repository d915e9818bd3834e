use rand::Rng as _;

use super::params::{ModelParams, Scalar};
use super::MtnnError;
use crate::chem::Fingerprint;
use crate::rng::Rng;

/// Batch-norm variance epsilon.
pub const BN_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm, dropout masks applied if given.
    Train,
    /// Running statistics, no dropout.
    Infer,
}

/// Indices of the set bits of a fingerprint, the network's input encoding.
pub fn active_bits(fp: &Fingerprint) -> Vec<u32> {
    fp.ones().map(|b| b as u32).collect()
}

/// Per-layer dropout multipliers (`0` or `1/keep`), row-major `batch × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks<S: Scalar> {
    pub layers: Vec<Vec<S>>,
}

impl<S: Scalar> DropoutMasks<S> {
    /// Keep decisions use 16-bit uniform draws, so the keep probability is
    /// quantized to multiples of 2^-16 (exact for the usual rates).
    pub fn sample(params: &ModelParams<S>, batch: usize, rate: f64, rng: &mut Rng) -> Self {
        let keep = 1.0 - rate;
        let scale = S::from_f64(1.0 / keep);
        let threshold = (keep * 65536.0).round() as u32;
        let choice = [S::zero(), scale];
        let layers = params
            .layout()
            .layers
            .iter()
            .map(|l| {
                let n = batch * l.output;
                let mut draws = vec![0u64; n.div_ceil(4)];
                rng.fill(draws.as_mut_slice());
                let mut mask = vec![S::zero(); 4 * draws.len()];
                for (m, d) in mask.chunks_exact_mut(4).zip(&draws) {
                    for (k, mk) in m.iter_mut().enumerate() {
                        *mk = choice[((((d >> (16 * k)) & 0xFFFF) as u32) < threshold) as usize];
                    }
                }
                mask.truncate(n);
                mask
            })
            .collect();
        DropoutMasks { layers }
    }

    pub fn keep_all(params: &ModelParams<S>, batch: usize) -> Self {
        DropoutMasks {
            layers: params
                .layout()
                .layers
                .iter()
                .map(|l| vec![S::one(); batch * l.output])
                .collect(),
        }
    }
}

/// Batch mean and (biased) variance of one layer's pre-normalization output.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

struct LayerCache<S> {
    xhat: Vec<S>,
    y: Vec<S>,
    h: Vec<S>,
    inv_std: Vec<S>,
    stats: BatchStats,
}

fn check_inputs<S: Scalar>(params: &ModelParams<S>, rows: &[&[u32]]) -> Result<(), MtnnError> {
    let width = params.input_width();
    for r in rows {
        if let Some(&bad) = r.iter().find(|&&i| i as usize >= width) {
            return Err(MtnnError::ShapeMismatch {
                expected: width,
                found: bad as usize + 1,
            });
        }
    }
    Ok(())
}

/// `z += Σ_k c_k · m[i_k]` over `(i_k, c_k)` pairs, where `m` is row-major
/// with rows of length `z.len()`. Rows are processed four at a time; the
/// per-element summation order is the same as adding them one by one.
fn add_scaled_rows<S: Scalar>(z: &mut [S], m: &[S], terms: &[(u32, S)]) {
    let out = z.len();
    let row = |i: u32| &m[i as usize * out..(i as usize + 1) * out];
    let mut chunks = terms.chunks_exact(4);
    for c in &mut chunks {
        let (r0, r1, r2, r3) = (row(c[0].0), row(c[1].0), row(c[2].0), row(c[3].0));
        let (a0, a1, a2, a3) = (c[0].1, c[1].1, c[2].1, c[3].1);
        for ((((zj, &w0), &w1), &w2), &w3) in z.iter_mut().zip(r0).zip(r1).zip(r2).zip(r3) {
            *zj = (((*zj + a0 * w0) + a1 * w1) + a2 * w2) + a3 * w3;
        }
    }
    for &(i, a) in chunks.remainder() {
        for (zj, &wj) in z.iter_mut().zip(row(i)) {
            *zj += a * wj;
        }
    }
}

/// `z += Σ_k m[i_k]` (unit coefficients).
fn add_rows<S: Scalar>(z: &mut [S], m: &[S], idx: &[u32]) {
    let out = z.len();
    let row = |i: u32| &m[i as usize * out..(i as usize + 1) * out];
    let mut chunks = idx.chunks_exact(4);
    for c in &mut chunks {
        let (r0, r1, r2, r3) = (row(c[0]), row(c[1]), row(c[2]), row(c[3]));
        for ((((zj, &w0), &w1), &w2), &w3) in z.iter_mut().zip(r0).zip(r1).zip(r2).zip(r3) {
            *zj = (((*zj + w0) + w1) + w2) + w3;
        }
    }
    for &i in chunks.remainder() {
        for (zj, &wj) in z.iter_mut().zip(row(i)) {
            *zj += wj;
        }
    }
}

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = [S::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

/// Non-zero entries of a row-major `n × width` matrix grouped by column:
/// for each column, `(row, value)` pairs in increasing row order.
struct ColumnIndex<S> {
    starts: Vec<usize>,
    entries: Vec<(u32, S)>,
}

impl<S: Scalar> ColumnIndex<S> {
    fn build<R, I>(width: usize, rows: R) -> Self
    where
        R: Iterator<Item = I> + Clone,
        I: Iterator<Item = (u32, S)>,
    {
        let mut starts = vec![0usize; width + 1];
        for row in rows.clone() {
            for (c, _) in row {
                starts[c as usize + 1] += 1;
            }
        }
        for c in 0..width {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut entries = vec![(0u32, S::zero()); starts[width]];
        for (r, row) in rows.enumerate() {
            for (c, v) in row {
                entries[fill[c as usize]] = (r as u32, v);
                fill[c as usize] += 1;
            }
        }
        ColumnIndex { starts, entries }
    }

    fn column(&self, c: usize) -> &[(u32, S)] {
        &self.entries[self.starts[c]..self.starts[c + 1]]
    }
}

fn nonzeros<S: Scalar>(row: &[S]) -> impl Iterator<Item = (u32, S)> + Clone + '_ {
    row.iter()
        .enumerate()
        .filter(|(_, a)| !a.is_zero())
        .map(|(i, a)| (i as u32, *a))
}

fn hidden_forward<S: Scalar>(
    params: &ModelParams<S>,
    rows: &[&[u32]],
    mode: Mode,
    masks: Option<&DropoutMasks<S>>,
) -> Vec<LayerCache<S>> {
    let values = params.values();
    let running = params.running();
    let n = rows.len();
    let mut caches: Vec<LayerCache<S>> = Vec::with_capacity(params.layout().layers.len());
    let mut terms: Vec<(u32, S)> = Vec::new();
    for (li, l) in params.layout().layers.iter().enumerate() {
        let out = l.output;
        let w = &values[l.w..l.b];
        let mut z = vec![S::zero(); n * out];
        for (r, zr) in z.chunks_exact_mut(out).enumerate() {
            zr.copy_from_slice(&values[l.b..l.gamma]);
            if li == 0 {
                add_rows(zr, w, rows[r]);
            } else {
                terms.clear();
                terms.extend(nonzeros(&caches[li - 1].h[r * l.input..(r + 1) * l.input]));
                add_scaled_rows(zr, w, &terms);
            }
        }

        let stats = match mode {
            Mode::Train => {
                let mut mean = vec![0.0f64; out];
                for zr in z.chunks_exact(out) {
                    for (m, v) in mean.iter_mut().zip(zr) {
                        *m += v.as_f64();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0f64; out];
                for zr in z.chunks_exact(out) {
                    for ((s, v), m) in var.iter_mut().zip(zr).zip(&mean) {
                        let d = v.as_f64() - m;
                        *s += d * d;
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                BatchStats { mean, var }
            }
            Mode::Infer => BatchStats {
                mean: running[l.running..l.running + out].iter().map(|v| v.as_f64()).collect(),
                var: running[l.running + out..l.running + 2 * out]
                    .iter()
                    .map(|v| v.as_f64())
                    .collect(),
            },
        };
        let mean: Vec<S> = stats.mean.iter().map(|&m| S::from_f64(m)).collect();
        let inv_std: Vec<S> = stats
            .var
            .iter()
            .map(|v| S::from_f64(1.0 / (v + BN_EPSILON).sqrt()))
            .collect();
        let gamma = &values[l.gamma..l.beta];
        let beta = &values[l.beta..l.beta + out];
        let mut xhat = z;
        let mut y = vec![S::zero(); n * out];
        let mut h = vec![S::zero(); n * out];
        for ((xr, yr), hr) in xhat
            .chunks_exact_mut(out)
            .zip(y.chunks_exact_mut(out))
            .zip(h.chunks_exact_mut(out))
        {
            let affine = mean.iter().zip(&inv_std).zip(gamma.iter().zip(beta));
            for (((x, yv), hv), ((&m, &s), (&g, &b))) in xr.iter_mut().zip(yr.iter_mut()).zip(hr.iter_mut()).zip(affine) {
                let xn = (*x - m) * s;
                *x = xn;
                let v = g * xn + b;
                *yv = v;
                *hv = v.max(S::zero());
            }
        }
        if let (Mode::Train, Some(m)) = (mode, masks) {
            for (hv, &k) in h.iter_mut().zip(&m.layers[li]) {
                *hv *= k;
            }
        }
        caches.push(LayerCache {
            xhat,
            y,
            h,
            inv_std,
            stats,
        });
    }
    caches
}

/// Two-class log-softmax of `(l0, l1)`.
#[inline]
fn log_softmax2(l0: f64, l1: f64) -> [f64; 2] {
    let m = l0.max(l1);
    let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
    [l0 - lse, l1 - lse]
}

fn head_logits<S: Scalar>(params: &ModelParams<S>, t: usize, h: &[S]) -> (f64, f64) {
    let values = params.values();
    let head = params.layout().heads[t];
    let last = h.len();
    let w = &values[head.w..head.b];
    (
        (values[head.b] + dot(h, &w[..last])).as_f64(),
        (values[head.b + 1] + dot(h, &w[last..])).as_f64(),
    )
}

/// Class probabilities per (row, task).
#[derive(Debug, Clone, PartialEq)]
pub struct Probabilities {
    pub n_rows: usize,
    pub n_tasks: usize,
    /// Row-major `rows × tasks`, each `[p(inactive), p(active)]`.
    pub values: Vec<[f64; 2]>,
}

impl Probabilities {
    pub fn get(&self, row: usize, task: usize) -> [f64; 2] {
        self.values[row * self.n_tasks + task]
    }

    pub fn active(&self, row: usize, task: usize) -> f64 {
        self.get(row, task)[1]
    }

    /// Active-class scores for one task.
    pub fn task_scores(&self, task: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.active(r, task)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub probabilities: Probabilities,
    /// Statistics used by each batch-norm layer.
    pub stats: Vec<BatchStats>,
}

/// Forward pass over a batch given as active-bit lists.
pub fn forward<S: Scalar>(
    params: &ModelParams<S>,
    rows: &[&[u32]],
    mode: Mode,
    masks: Option<&DropoutMasks<S>>,
) -> Result<Forward, MtnnError> {
    check_inputs(params, rows)?;
    let caches = hidden_forward(params, rows, mode, masks);
    let last = params.layout().last();
    let n_tasks = params.n_tasks();
    let top = &caches.last().expect("at least one hidden layer").h;
    let mut values = Vec::with_capacity(rows.len() * n_tasks);
    for h in top.chunks_exact(last) {
        for t in 0..n_tasks {
            let (l0, l1) = head_logits(params, t, h);
            let lp = log_softmax2(l0, l1);
            values.push([lp[0].exp(), lp[1].exp()]);
        }
    }
    Ok(Forward {
        probabilities: Probabilities {
            n_rows: rows.len(),
            n_tasks,
            values,
        },
        stats: caches.into_iter().map(|c| c.stats).collect(),
    })
}

/// Inference over fingerprints, processed in chunks.
pub fn predict<S: Scalar>(params: &ModelParams<S>, features: &[Fingerprint]) -> Result<Probabilities, MtnnError> {
    if let Some(fp) = features.iter().find(|f| f.width() != params.input_width()) {
        return Err(MtnnError::ShapeMismatch {
            expected: params.input_width(),
            found: fp.width(),
        });
    }
    let bits: Vec<Vec<u32>> = features.iter().map(active_bits).collect();
    let mut values = Vec::with_capacity(features.len() * params.n_tasks());
    for chunk in bits.chunks(512) {
        let rows: Vec<&[u32]> = chunk.iter().map(Vec::as_slice).collect();
        values.extend(forward(params, &rows, Mode::Infer, None)?.probabilities.values);
    }
    Ok(Probabilities {
        n_rows: features.len(),
        n_tasks: params.n_tasks(),
        values,
    })
}

/// Weighted cross-entropy: `(1/B) Σ_rows Σ_tasks task_weight × example_weight × −ln p(label)`.
/// Entries with zero weight are skipped entirely.
pub fn loss(
    probabilities: &Probabilities,
    labels: &[u8],
    example_weights: &[f64],
    task_weights: &[f64],
) -> Result<f64, MtnnError> {
    let n = probabilities.n_rows * probabilities.n_tasks;
    for (expected, found) in [
        (n, labels.len()),
        (n, example_weights.len()),
        (probabilities.n_tasks, task_weights.len()),
    ] {
        if expected != found {
            return Err(MtnnError::ShapeMismatch { expected, found });
        }
    }
    let mut total = 0.0;
    for (k, p) in probabilities.values.iter().enumerate() {
        let w = example_weights[k] * task_weights[k % probabilities.n_tasks];
        if w != 0.0 {
            total -= w * p[labels[k] as usize].ln();
        }
    }
    Ok(if probabilities.n_rows == 0 {
        0.0
    } else {
        total / probabilities.n_rows as f64
    })
}

/// Gradient buffer matching the flat parameter layout. Tracks which
/// first-layer weight rows are non-zero so they can be cleared and updated
/// sparsely.
#[derive(Debug, Clone)]
pub struct Gradient<S: Scalar> {
    pub values: Vec<S>,
    touched: Vec<bool>,
    touched_list: Vec<u32>,
    dense_from: usize,
    first_out: usize,
}

impl<S: Scalar> Gradient<S> {
    pub fn new(params: &ModelParams<S>) -> Self {
        let l0 = params.layout().layers[0];
        Gradient {
            values: vec![S::zero(); params.layout().n_values],
            touched: vec![false; l0.input],
            touched_list: Vec::new(),
            dense_from: l0.b,
            first_out: l0.output,
        }
    }

    /// First-layer input rows with a (possibly) non-zero gradient.
    pub fn touched_rows(&self) -> &[u32] {
        &self.touched_list
    }

    /// Offset where the dense (always updated) part of the gradient starts.
    pub fn dense_from(&self) -> usize {
        self.dense_from
    }

    pub fn first_out(&self) -> usize {
        self.first_out
    }

    pub fn clear(&mut self) {
        let out = self.first_out;
        for &i in &self.touched_list {
            self.values[i as usize * out..(i as usize + 1) * out].fill(S::zero());
            self.touched[i as usize] = false;
        }
        self.touched_list.clear();
        self.values[self.dense_from..].fill(S::zero());
    }

    pub fn is_finite(&self) -> bool {
        let out = self.first_out;
        self.touched_list
            .iter()
            .flat_map(|&i| &self.values[i as usize * out..(i as usize + 1) * out])
            .chain(&self.values[self.dense_from..])
            .all(|v| v.is_finite())
    }

    fn touch(&mut self, i: u32) {
        if !self.touched[i as usize] {
            self.touched[i as usize] = true;
            self.touched_list.push(i);
        }
    }
}

/// Training-mode loss and its gradient, accumulated into `grad` (which
/// should be cleared beforehand). Heads are evaluated only for entries with
/// non-zero weight. Returns the loss and the batch statistics.
pub fn loss_and_gradient<S: Scalar>(
    params: &ModelParams<S>,
    rows: &[&[u32]],
    labels: &[u8],
    example_weights: &[f64],
    task_weights: &[f64],
    masks: Option<&DropoutMasks<S>>,
    grad: &mut Gradient<S>,
) -> Result<(f64, Vec<BatchStats>), MtnnError> {
    check_inputs(params, rows)?;
    let n = rows.len();
    let n_tasks = params.n_tasks();
    for (expected, found) in [
        (n * n_tasks, labels.len()),
        (n * n_tasks, example_weights.len()),
        (n_tasks, task_weights.len()),
        (params.layout().n_values, grad.values.len()),
    ] {
        if expected != found {
            return Err(MtnnError::ShapeMismatch { expected, found });
        }
    }
    let layout = params.layout();
    let values = params.values();
    let caches = hidden_forward(params, rows, Mode::Train, masks);
    let last = layout.last();
    let top = &caches.last().expect("at least one hidden layer").h;

    let mut total = 0.0;
    let mut dh = vec![S::zero(); n * last];
    for r in 0..n {
        let h = &top[r * last..(r + 1) * last];
        for t in 0..n_tasks {
            let k = r * n_tasks + t;
            let coef = example_weights[k] * task_weights[t] / n as f64;
            if coef == 0.0 {
                continue;
            }
            let (l0, l1) = head_logits(params, t, h);
            let lp = log_softmax2(l0, l1);
            let y = labels[k] as usize;
            total -= coef * lp[y];
            let d = [
                S::from_f64(coef * (lp[0].exp() - (y == 0) as u8 as f64)),
                S::from_f64(coef * (lp[1].exp() - (y == 1) as u8 as f64)),
            ];
            let head = layout.heads[t];
            let w = &values[head.w..head.b];
            let dhr = &mut dh[r * last..(r + 1) * last];
            for c in 0..2 {
                let gw = &mut grad.values[head.w + c * last..head.w + (c + 1) * last];
                for (g, &hi) in gw.iter_mut().zip(h) {
                    *g += d[c] * hi;
                }
                grad.values[head.b + c] += d[c];
                for (g, &wi) in dhr.iter_mut().zip(&w[c * last..(c + 1) * last]) {
                    *g += d[c] * wi;
                }
            }
        }
    }

    let inv_n = 1.0 / n as f64;
    for li in (0..layout.layers.len()).rev() {
        let l = layout.layers[li];
        let out = l.output;
        let cache = &caches[li];
        // dh → dy through dropout and ReLU, reusing dh's storage
        let mut dy = dh;
        if let Some(m) = masks {
            for (d, &k) in dy.iter_mut().zip(&m.layers[li]) {
                *d *= k;
            }
        }
        for (d, yv) in dy.iter_mut().zip(&cache.y) {
            if *yv <= S::zero() {
                *d = S::zero();
            }
        }
        let mut dgamma = vec![0.0f64; out];
        let mut dbeta = vec![0.0f64; out];
        for (dr, xr) in dy.chunks_exact(out).zip(cache.xhat.chunks_exact(out)) {
            for (((gs, bs), &d), &x) in dgamma.iter_mut().zip(dbeta.iter_mut()).zip(dr).zip(xr) {
                *gs += (d * x).as_f64();
                *bs += d.as_f64();
            }
        }
        // dz = γ σ⁻¹ (dy − mean(dy) − x̂ · mean(dy x̂)), stored in place
        let scale: Vec<S> = values[l.gamma..l.beta]
            .iter()
            .zip(&cache.inv_std)
            .map(|(&g, &s)| g * s)
            .collect();
        let mean_dy: Vec<S> = dbeta.iter().map(|b| S::from_f64(b * inv_n)).collect();
        let mean_dyx: Vec<S> = dgamma.iter().map(|g| S::from_f64(g * inv_n)).collect();
        let mut dz = dy;
        for (dr, xr) in dz.chunks_exact_mut(out).zip(cache.xhat.chunks_exact(out)) {
            let coeffs = scale.iter().zip(mean_dy.iter().zip(&mean_dyx));
            for ((d, &x), (&s, (&md, &mdx))) in dr.iter_mut().zip(xr).zip(coeffs) {
                *d = s * (*d - md - x * mdx);
            }
        }
        for j in 0..out {
            grad.values[l.gamma + j] += S::from_f64(dgamma[j]);
            grad.values[l.beta + j] += S::from_f64(dbeta[j]);
        }
        let mut db = vec![0.0f64; out];
        for dzr in dz.chunks_exact(out) {
            for (g, d) in db.iter_mut().zip(dzr) {
                *g += d.as_f64();
            }
        }
        for (g, d) in grad.values[l.b..l.gamma].iter_mut().zip(&db) {
            *g += S::from_f64(*d);
        }
        if li == 0 {
            let index = ColumnIndex::build(l.input, rows.iter().map(|r| r.iter().map(|&i| (i, S::one()))));
            for r in rows {
                for &i in r.iter() {
                    grad.touch(i);
                }
            }
            for k in 0..grad.touched_list.len() {
                let i = grad.touched_list[k] as usize;
                let gw = &mut grad.values[l.w + i * out..l.w + (i + 1) * out];
                add_scaled_rows(gw, &dz, index.column(i));
            }
            dh = Vec::new();
        } else {
            let prev = &caches[li - 1].h;
            let inp = l.input;
            let w = &values[l.w..l.b];
            let index = ColumnIndex::build(inp, prev.chunks_exact(inp).map(nonzeros));
            for i in 0..inp {
                let gw = &mut grad.values[l.w + i * out..l.w + (i + 1) * out];
                add_scaled_rows(gw, &dz, index.column(i));
            }
            // dropped or inactive units pass no gradient back
            let mut dprev = vec![S::zero(); n * inp];
            for ((dzr, hr), dr) in dz.chunks_exact(out).zip(prev.chunks_exact(inp)).zip(dprev.chunks_exact_mut(inp)) {
                for (i, (a, d)) in hr.iter().zip(dr.iter_mut()).enumerate() {
                    if !a.is_zero() {
                        *d = dot(dzr, &w[i * out..(i + 1) * out]);
                    }
                }
            }
            dh = dprev;
        }
    }
    drop(dh);
    Ok((total, caches.into_iter().map(|c| c.stats).collect()))
}
