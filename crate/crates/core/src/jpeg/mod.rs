//! Baseline JPEG codec and its differentiable simulation.

mod decoder;
mod encoder;
mod simulate;
mod tables;
mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use decoder::{decode_frame, jpeg_decode};
pub use encoder::{encode_frame, jpeg_encode};
pub use simulate::{jpeg_simulate, quantize_8bit, simulate_rounding_free};
pub use tables::{quant_tables_for_quality, QuantTables, BASE_CHROMA, BASE_LUMA, ZIGZAG};
pub use transform::{analyze, fdct, idct, synthesize, Component, Frame, RGB_TO_YCC, YCC_TO_RGB};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChromaSubsampling {
    #[serde(rename = "4:4:4")]
    S444,
    #[default]
    #[serde(rename = "4:2:0")]
    S420,
}

impl ChromaSubsampling {
    /// Luma sampling factors relative to chroma.
    pub fn luma_factors(self) -> (usize, usize) {
        match self {
            ChromaSubsampling::S444 => (1, 1),
            ChromaSubsampling::S420 => (2, 2),
        }
    }
}

impl std::str::FromStr for ChromaSubsampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "444" | "4:4:4" => Ok(ChromaSubsampling::S444),
            "420" | "4:2:0" => Ok(ChromaSubsampling::S420),
            _ => Err(Error::Config(format!("unknown chroma subsampling {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct JpegConfig {
    pub quality: u8,
    pub chroma_subsampling: ChromaSubsampling,
}

impl Default for JpegConfig {
    fn default() -> Self {
        JpegConfig {
            quality: 90,
            chroma_subsampling: ChromaSubsampling::S420,
        }
    }
}

impl JpegConfig {
    pub fn new(quality: u8, chroma_subsampling: ChromaSubsampling) -> Self {
        JpegConfig {
            quality,
            chroma_subsampling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        quant_tables_for_quality(self.quality).map(|_| ())
    }
}
