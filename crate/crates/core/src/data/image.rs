//! 8-bit RGB images with lossless I/O: binary PPM (P6) read/write plus PNG
//! decode for source material. Augmented outputs are always written as PPM,
//! whose encoding is trivially byte-deterministic.

use std::path::Path;

use crate::{Error, Result};

/// Row-major H×W×3 interleaved RGB, 8 bits per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rgb8Image {
    pub width: usize,
    pub height: usize,
    data: Vec<u8>,
}

impl Rgb8Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::shape(format!(
                "image data length {} does not match {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut token = |label: &str| -> Result<String> {
            // skip whitespace and # comments
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("ppm: missing {label}"),
                });
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };

        if token("magic")? != "P6" {
            return Err(Error::Parse {
                line: 0,
                msg: "ppm: not a binary P6 file".to_string(),
            });
        }
        let parse_dim = |s: String, label: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse {
                line: 0,
                msg: format!("ppm: bad {label} {s:?}"),
            })
        };
        let width = parse_dim(token("width")?, "width")?;
        let height = parse_dim(token("height")?, "height")?;
        let maxval = parse_dim(token("maxval")?, "maxval")?;
        if maxval != 255 {
            return Err(Error::Parse {
                line: 0,
                msg: format!("ppm: unsupported maxval {maxval}, expected 255"),
            });
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let need = width * height * 3;
        if bytes.len() < pos + need {
            return Err(Error::Parse {
                line: 0,
                msg: format!(
                    "ppm: raster truncated, need {need} bytes, found {}",
                    bytes.len().saturating_sub(pos)
                ),
            });
        }
        Self::new(width, height, bytes[pos..pos + need].to_vec())
    }

    /// Load by extension: `.ppm` through the built-in parser, `.png` through
    /// the image codec.
    pub fn load(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "ppm" => Self::from_ppm_bytes(&std::fs::read(path)?),
            "png" => {
                let img = image::open(path).map_err(|e| Error::Parse {
                    line: 0,
                    msg: format!("png decode failed for {}: {e}", path.display()),
                })?;
                let rgb = img.to_rgb8();
                Self::new(rgb.width() as usize, rgb.height() as usize, rgb.into_raw())
            }
            other => Err(Error::Param(format!(
                "unsupported image extension {other:?} for {} (ppm and png only)",
                path.display()
            ))),
        }
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm_bytes())?;
        Ok(())
    }
}
