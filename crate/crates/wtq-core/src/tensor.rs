//! Dense weight tensors and quantization artifacts.
//!
//! `TensorContainer` is the unit of quantization input: a flat row-major
//! element buffer plus shape. `QuantArtifact` is the quantized counterpart:
//! per-channel codebooks, per-element level assignments, and method metadata.
//! Both are immutable values; the binary file formats that carry them live in
//! `wtq-tools`.

use alloc::vec::Vec;
use core::fmt;

/// Element kind of a tensor payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    /// Byte-level tag used by the tensor file format.
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    /// Payload bytes per element.
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Flat row-major element storage. Widths are kept separate so that a
/// read-write cycle reproduces the original bits exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    fn first_non_finite(&self) -> Option<usize> {
        match self {
            TensorData::F32(v) => v.iter().position(|x| !x.is_finite()),
            TensorData::F64(v) => v.iter().position(|x| !x.is_finite()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TensorError {
    /// Data length does not match the product of the shape entries.
    LengthMismatch { expected: usize, actual: usize },
    /// A NaN or infinity at the given element index.
    NonFinite { index: usize },
    /// Shape product overflows usize.
    ShapeOverflow,
    /// A codebook does not have exactly `2^bits` non-decreasing levels.
    BadCodebook { channel: usize },
    /// An assignment index is `>= 2^bits`.
    AssignmentOutOfRange { channel: usize, index: usize },
    /// Per-channel assignment count does not match the shape.
    ChannelLengthMismatch {
        channel: usize,
        expected: usize,
        actual: usize,
    },
    /// Channel count is inconsistent with the leading shape dimension.
    ChannelShapeMismatch {
        channels: usize,
        leading_dim: Option<usize>,
    },
    /// Bits outside the supported 1..=16 range.
    BadBits { bits: u8 },
    /// Metadata vector length does not equal the channel count.
    MetaLengthMismatch { expected: usize, actual: usize },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::LengthMismatch { expected, actual } => {
                write!(
                    f,
                    "data length {actual} does not match shape product {expected}"
                )
            }
            TensorError::NonFinite { index } => {
                write!(f, "non-finite element at index {index}")
            }
            TensorError::ShapeOverflow => write!(f, "shape product overflows"),
            TensorError::BadCodebook { channel } => {
                write!(
                    f,
                    "channel {channel}: codebook is not 2^bits non-decreasing levels"
                )
            }
            TensorError::AssignmentOutOfRange { channel, index } => {
                write!(f, "channel {channel}: assignment at {index} is >= 2^bits")
            }
            TensorError::ChannelLengthMismatch {
                channel,
                expected,
                actual,
            } => {
                write!(
                    f,
                    "channel {channel}: {actual} assignments, expected {expected}"
                )
            }
            TensorError::ChannelShapeMismatch {
                channels,
                leading_dim,
            } => {
                write!(
                    f,
                    "channel count {channels} inconsistent with leading dim {leading_dim:?}"
                )
            }
            TensorError::BadBits { bits } => write!(f, "bits {bits} outside 1..=16"),
            TensorError::MetaLengthMismatch { expected, actual } => {
                write!(f, "range_meta length {actual}, expected {expected}")
            }
        }
    }
}

impl core::error::Error for TensorError {}

/// Product of shape entries, checked. An empty shape is a scalar (1 element);
/// a zero entry makes the tensor empty, which is legal.
pub fn element_count(shape: &[usize]) -> Result<usize, TensorError> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(TensorError::ShapeOverflow)
}

/// A dense real-valued tensor: shape plus flat row-major data.
///
/// Invariants (enforced at construction): data length equals the shape
/// product and every element is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorContainer {
    shape: Vec<usize>,
    data: TensorData,
}

impl TensorContainer {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self, TensorError> {
        let expected = element_count(&shape)?;
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.first_non_finite() {
            return Err(TensorError::NonFinite { index });
        }
        Ok(TensorContainer { shape, data })
    }

    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(shape, TensorData::F64(data))
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(shape, TensorData::F32(data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Elements widened to f64 (exact for f32 sources).
    pub fn values(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

/// Quantization scheme tag carried by artifacts and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantMethod {
    Uniform,
    OtEqualMass,
    Pwl,
    Log2,
}

impl QuantMethod {
    pub fn code(self) -> u8 {
        match self {
            QuantMethod::Uniform => 0,
            QuantMethod::OtEqualMass => 1,
            QuantMethod::Pwl => 2,
            QuantMethod::Log2 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(QuantMethod::Uniform),
            1 => Some(QuantMethod::OtEqualMass),
            2 => Some(QuantMethod::Pwl),
            3 => Some(QuantMethod::Log2),
            _ => None,
        }
    }
}

impl fmt::Display for QuantMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantMethod::Uniform => "uniform",
            QuantMethod::OtEqualMass => "ot",
            QuantMethod::Pwl => "pwl",
            QuantMethod::Log2 => "log2",
        })
    }
}

/// Per-channel element count implied by a shape and channel count.
///
/// One channel means the whole tensor is a single flattened stream; several
/// channels require the leading dimension to equal the channel count.
pub fn channel_element_count(shape: &[usize], channels: usize) -> Result<usize, TensorError> {
    if channels == 1 {
        element_count(shape)
    } else if shape.first() == Some(&channels) {
        element_count(&shape[1..])
    } else {
        Err(TensorError::ChannelShapeMismatch {
            channels,
            leading_dim: shape.first().copied(),
        })
    }
}

/// Quantized tensor: per-channel codebooks and assignments plus metadata.
///
/// Invariants: every codebook holds exactly `2^bits` non-decreasing finite
/// levels, every assignment index is `< 2^bits`, and per-channel assignment
/// counts match the original shape.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantArtifact {
    method: QuantMethod,
    bits: u8,
    codebooks: Vec<Vec<f64>>,
    assignments: Vec<Vec<u32>>,
    original_shape: Vec<usize>,
    range_meta: Vec<f64>,
}

impl QuantArtifact {
    pub fn new(
        method: QuantMethod,
        bits: u8,
        codebooks: Vec<Vec<f64>>,
        assignments: Vec<Vec<u32>>,
        original_shape: Vec<usize>,
        range_meta: Vec<f64>,
    ) -> Result<Self, TensorError> {
        if !(1..=16).contains(&bits) {
            return Err(TensorError::BadBits { bits });
        }
        let channels = codebooks.len();
        if assignments.len() != channels {
            return Err(TensorError::MetaLengthMismatch {
                expected: channels,
                actual: assignments.len(),
            });
        }
        if range_meta.len() != channels {
            return Err(TensorError::MetaLengthMismatch {
                expected: channels,
                actual: range_meta.len(),
            });
        }
        let k = 1usize << bits;
        let per_channel = channel_element_count(&original_shape, channels)?;
        for (ch, levels) in codebooks.iter().enumerate() {
            let sorted = levels.windows(2).all(|w| w[0] <= w[1]);
            let finite = levels.iter().all(|x| x.is_finite());
            if levels.len() != k || !sorted || !finite {
                return Err(TensorError::BadCodebook { channel: ch });
            }
        }
        for (ch, asg) in assignments.iter().enumerate() {
            if asg.len() != per_channel {
                return Err(TensorError::ChannelLengthMismatch {
                    channel: ch,
                    expected: per_channel,
                    actual: asg.len(),
                });
            }
            if let Some(index) = asg.iter().position(|&a| a as usize >= k) {
                return Err(TensorError::AssignmentOutOfRange { channel: ch, index });
            }
        }
        Ok(QuantArtifact {
            method,
            bits,
            codebooks,
            assignments,
            original_shape,
            range_meta,
        })
    }

    pub fn method(&self) -> QuantMethod {
        self.method
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn levels_per_channel(&self) -> usize {
        1usize << self.bits
    }

    pub fn channels(&self) -> usize {
        self.codebooks.len()
    }

    pub fn codebooks(&self) -> &[Vec<f64>] {
        &self.codebooks
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.assignments
    }

    pub fn original_shape(&self) -> &[usize] {
        &self.original_shape
    }

    pub fn range_meta(&self) -> &[f64] {
        &self.range_meta
    }
}

/// Reconstruct the tensor an artifact describes by codebook lookup.
///
/// Element `i` of channel `c` becomes `codebooks[c][assignments[c][i]]`; the
/// output carries the original shape and is always binary64, matching the
/// stored codebook precision.
pub fn dequantize(artifact: &QuantArtifact) -> TensorContainer {
    let mut out = Vec::with_capacity(artifact.assignments.iter().map(Vec::len).sum());
    for (levels, asg) in artifact.codebooks.iter().zip(&artifact.assignments) {
        out.extend(asg.iter().map(|&a| levels[a as usize]));
    }
    TensorContainer::new(artifact.original_shape.clone(), TensorData::F64(out))
        .expect("artifact invariants guarantee a valid tensor")
}
