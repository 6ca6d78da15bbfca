use std::fmt::{Debug, Display};

/// Element dtypes understood by the on-disk tensor format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Scalar element of a tensor. Implemented for `f32` (training/inference) and
/// `f64` (oracle and gradient-check mode). A graph is monomorphic in its
/// element type, so mixed-precision graphs are unrepresentable.
pub trait Elem:
    num_traits::Float + Copy + Send + Sync + Debug + Display + 'static
{
    const DTYPE: DType;
    /// In checked mode every op validates its inputs are finite before
    /// computing. Enabled for f64 so oracle runs fail loudly at the op that
    /// first saw bad data rather than at the loss.
    const CHECKED: bool;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    fn to_le_bytes_vec(self) -> Vec<u8>;
    fn from_le_slice(bytes: &[u8]) -> Self;
}

impl Elem for f32 {
    const DTYPE: DType = DType::F32;
    const CHECKED: bool = false;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn to_le_bytes_vec(self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }

    fn from_le_slice(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte f32"))
    }
}

impl Elem for f64 {
    const DTYPE: DType = DType::F64;
    const CHECKED: bool = true;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn to_le_bytes_vec(self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }

    fn from_le_slice(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte f64"))
    }
}
