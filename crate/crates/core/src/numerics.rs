//! Seeded random streams and activation functions.
//!
//! # Random streams
//!
//! Every stream is a ChaCha8 generator (`rand_chacha`, RFC 7539 block
//! function with 8 rounds). The 32-byte key is expanded from the 64-bit seed
//! with SplitMix64 (`ChaCha8Rng::seed_from_u64`), and the 64-bit ChaCha
//! stream word is the FNV-1a hash of the stream label. Both pieces are fixed
//! algorithms, so a `(seed, label)` pair yields the same draws on every
//! platform and every build.
//!
//! Uniform reals take the top 53 bits of one `u64` word, normals use the
//! Box–Muller transform on two uniforms. Neither depends on `rand`'s
//! distribution implementations, which are allowed to change between versions.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FNV-1a, 64-bit.
fn fnv1a(label: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A named, independently reproducible random stream.
#[derive(Clone)]
pub struct RngStream {
    seed: u64,
    label: String,
    rng: ChaCha8Rng,
}

impl fmt::Debug for RngStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RngStream")
            .field("seed", &self.seed)
            .field("label", &self.label)
            .finish()
    }
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a(&label));
        Self { seed, label, rng }
    }

    /// Child stream named `<label>/<name>` under the same seed. Deriving
    /// does not consume draws from `self`.
    pub fn derive(&self, name: &str) -> Self {
        Self::new(self.seed, format!("{}/{}", self.label, name))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn next_uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "uniform range requires lo < hi, got [{lo}, {hi})"
            )));
        }
        let v = lo + (hi - lo) * self.next_unit();
        // rounding can land exactly on hi for wide ranges
        Ok(if v >= hi { lo.max(hi - (hi - lo) * f64::EPSILON) } else { v })
    }

    pub fn next_normal(&mut self, mean: f64, sd: f64) -> Result<f64> {
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "normal draw requires sd > 0, got {sd}"
            )));
        }
        // 1 - u lies in (0, 1], so the log is finite
        let u1 = 1.0 - self.next_unit();
        let u2 = self.next_unit();
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        Ok(mean + sd * z)
    }

    /// Uniform index in `0..n`. Uses rejection to avoid modulo bias.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_index on an empty range");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }
}

pub const LEAKY_RELU_SLOPE: f64 = 0.01;
pub const SELU_LAMBDA: f64 = 1.050700987;
pub const SELU_ALPHA: f64 = 1.673263242;

/// Hidden-node activation. Derivatives at the ReLU kink use the `x > 0` branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    Relu,
    LeakyRelu,
    Selu,
    Tanh,
    Sigmoid,
    Swish,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 6] = [
        ActivationKind::Relu,
        ActivationKind::LeakyRelu,
        ActivationKind::Selu,
        ActivationKind::Tanh,
        ActivationKind::Sigmoid,
        ActivationKind::Swish,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky-relu",
            ActivationKind::Selu => "selu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Swish => "swish",
        }
    }

    /// Points where the derivative is discontinuous.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            ActivationKind::Relu | ActivationKind::LeakyRelu | ActivationKind::Selu => &[0.0],
            _ => &[],
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.trim().to_ascii_lowercase().replace('_', "-");
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == normalized || (normalized == "lrelu" && *k == ActivationKind::LeakyRelu))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown activation '{s}'")))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activate(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Relu => x.max(0.0),
        ActivationKind::LeakyRelu => {
            if x > 0.0 {
                x
            } else {
                LEAKY_RELU_SLOPE * x
            }
        }
        ActivationKind::Selu => {
            if x > 0.0 {
                SELU_LAMBDA * x
            } else {
                SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
            }
        }
        ActivationKind::Tanh => x.tanh(),
        ActivationKind::Sigmoid => sigmoid(x),
        ActivationKind::Swish => x * sigmoid(x),
    }
}

pub fn activate_derivative(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Relu => {
            if x >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        ActivationKind::LeakyRelu => {
            if x >= 0.0 {
                1.0
            } else {
                LEAKY_RELU_SLOPE
            }
        }
        ActivationKind::Selu => {
            if x >= 0.0 {
                SELU_LAMBDA
            } else {
                SELU_LAMBDA * SELU_ALPHA * x.exp()
            }
        }
        ActivationKind::Tanh => {
            let t = x.tanh();
            1.0 - t * t
        }
        ActivationKind::Sigmoid => {
            let s = sigmoid(x);
            s * (1.0 - s)
        }
        ActivationKind::Swish => {
            let s = sigmoid(x);
            s + x * s * (1.0 - s)
        }
    }
}
