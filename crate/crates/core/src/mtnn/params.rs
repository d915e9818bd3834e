use std::fmt;
use std::ops::{AddAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_traits::Float;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::MtnnError;
use crate::rng::seeded;

/// Parameter and activation type. Training uses `f32`; `f64` gives the
/// headroom needed for finite-difference gradient checks.
pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + Default + fmt::Debug + Send + Sync + 'static
{
    const BYTES: usize;
    fn as_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const BYTES: usize = 4;

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Hidden layer sizes, written `(x1,x2,...)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Architecture(Vec<usize>);

impl Architecture {
    pub const PRESETS: [&'static [usize]; 5] = [
        &[1000],
        &[4000],
        &[2000, 100],
        &[2000, 1000],
        &[4000, 2000, 1000, 1000],
    ];

    pub fn new(hidden: Vec<usize>) -> Result<Self, MtnnError> {
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(MtnnError::InvalidArchitecture(format!("{hidden:?}")));
        }
        Ok(Architecture(hidden))
    }

    pub fn presets() -> Vec<Architecture> {
        Self::PRESETS.iter().map(|h| Architecture(h.to_vec())).collect()
    }

    pub fn hidden(&self) -> &[usize] {
        &self.0
    }

    pub fn last(&self) -> usize {
        *self.0.last().expect("non-empty architecture")
    }
}

impl TryFrom<Vec<usize>> for Architecture {
    type Error = MtnnError;

    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Architecture::new(v)
    }
}

impl From<Architecture> for Vec<usize> {
    fn from(a: Architecture) -> Self {
        a.0
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl FromStr for Architecture {
    type Err = MtnnError;

    /// Accepts `(2000,1000)`, `2000,1000` or `2000-1000`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let hidden = inner
            .split([',', '-'])
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| MtnnError::InvalidArchitecture(s.to_string()))?;
        Architecture::new(hidden)
    }
}

/// Offsets of one hidden layer's tensors inside the flat parameter vector.
/// `w` is row-major `input × output`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlots {
    pub input: usize,
    pub output: usize,
    pub w: usize,
    pub b: usize,
    pub gamma: usize,
    pub beta: usize,
    /// Offset of the running mean in the running-statistics vector; the
    /// running variance follows it.
    pub running: usize,
}

/// Offsets of one task head. `w` is row-major `2 × last hidden`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadSlots {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub input_width: usize,
    pub layers: Vec<LayerSlots>,
    pub heads: Vec<HeadSlots>,
    pub n_values: usize,
    pub n_running: usize,
}

impl Layout {
    pub fn new(arch: &Architecture, input_width: usize, n_tasks: usize) -> Layout {
        let mut at = 0;
        let mut running = 0;
        let mut input = input_width;
        let mut layers = Vec::new();
        for &output in arch.hidden() {
            let w = at;
            at += input * output;
            let slots = LayerSlots {
                input,
                output,
                w,
                b: at,
                gamma: at + output,
                beta: at + 2 * output,
                running,
            };
            at += 3 * output;
            running += 2 * output;
            layers.push(slots);
            input = output;
        }
        let heads = (0..n_tasks)
            .map(|_| {
                let h = HeadSlots { w: at, b: at + 2 * input };
                at += 2 * input + 2;
                h
            })
            .collect();
        Layout {
            input_width,
            layers,
            heads,
            n_values: at,
            n_running: running,
        }
    }

    pub fn last(&self) -> usize {
        self.layers.last().map_or(self.input_width, |l| l.output)
    }
}

/// Network parameters: hidden layers (affine + batch norm) and one
/// two-class softmax head per task.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S: Scalar = f32> {
    pub arch: Architecture,
    pub tasks: Vec<String>,
    layout: Layout,
    values: Vec<S>,
    running: Vec<S>,
}

impl<S: Scalar> ModelParams<S> {
    pub fn from_parts(
        arch: Architecture,
        input_width: usize,
        tasks: Vec<String>,
        values: Vec<S>,
        running: Vec<S>,
    ) -> Result<Self, MtnnError> {
        if input_width == 0 || tasks.is_empty() {
            return Err(MtnnError::ShapeMismatch {
                expected: 1,
                found: 0,
            });
        }
        let layout = Layout::new(&arch, input_width, tasks.len());
        for (expected, found) in [(layout.n_values, values.len()), (layout.n_running, running.len())] {
            if expected != found {
                return Err(MtnnError::ShapeMismatch { expected, found });
            }
        }
        Ok(ModelParams {
            arch,
            tasks,
            layout,
            values,
            running,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn input_width(&self) -> usize {
        self.layout.input_width
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// All trainable values, layer by layer then head by head.
    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    /// Batch-norm running means and variances, per layer.
    pub fn running(&self) -> &[S] {
        &self.running
    }

    pub fn running_mut(&mut self) -> &mut [S] {
        &mut self.running
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().chain(&self.running).all(|v| v.as_f64().is_finite())
    }

    pub fn convert<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            arch: self.arch.clone(),
            tasks: self.tasks.clone(),
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| T::from_f64(v.as_f64())).collect(),
            running: self.running.iter().map(|v| T::from_f64(v.as_f64())).collect(),
        }
    }
}

/// Fresh parameters: hidden weights ~ N(0, 2/fan_in), head weights
/// ~ N(0, 1/fan_in), biases and shifts 0, scales 1, running variance 1.
pub fn init_model<S: Scalar>(
    arch: &Architecture,
    input_width: usize,
    tasks: Vec<String>,
    seed: u64,
) -> Result<ModelParams<S>, MtnnError> {
    if input_width == 0 || tasks.is_empty() {
        return Err(MtnnError::ShapeMismatch {
            expected: 1,
            found: 0,
        });
    }
    let layout = Layout::new(arch, input_width, tasks.len());
    let mut values = vec![S::default(); layout.n_values];
    let mut running = vec![S::default(); layout.n_running];
    let mut rng = seeded(seed);
    let mut fill = |dst: &mut [S], std: f64| {
        let normal = Normal::new(0.0, std).expect("positive std");
        for v in dst {
            *v = S::from_f64(normal.sample(&mut rng));
        }
    };
    for l in &layout.layers {
        fill(&mut values[l.w..l.b], (2.0 / l.input as f64).sqrt());
        values[l.gamma..l.beta].fill(S::from_f64(1.0));
        running[l.running + l.output..l.running + 2 * l.output].fill(S::from_f64(1.0));
    }
    let last = layout.last();
    for h in &layout.heads {
        fill(&mut values[h.w..h.b], (1.0 / last as f64).sqrt());
    }
    Ok(ModelParams {
        arch: arch.clone(),
        tasks,
        layout,
        values,
        running,
    })
}
