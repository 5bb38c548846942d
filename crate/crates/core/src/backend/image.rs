use std::io::Cursor;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{ImageRef, Strength};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

/// Ancillary, private, safe-to-copy chunk used to pad mock containers.
const PAD_CHUNK: png::chunk::ChunkType = png::chunk::ChunkType(*b"dfPd");
/// Length + type + CRC framing around chunk data.
const CHUNK_OVERHEAD: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MockEdge,
    MockCloud,
    Remote,
}

#[derive(Debug, Clone)]
enum Body {
    /// Raster derived on demand from the latent vector and seed.
    Procedural {
        payload_target: usize,
    },
    Remote {
        body_len: usize,
    },
}

/// An RGB raster plus its encoded container.
///
/// Mock images render and encode lazily: labeling only ever needs the latent
/// vector, so pixels are produced the first time something asks for them.
#[derive(Debug, Clone)]
pub struct GeneratedImage {
    width: u32,
    height: u32,
    provenance: Provenance,
    seed: u64,
    semantic_vec: Option<EmbeddingVector>,
    strength_used: Option<Strength>,
    body: Body,
    pixels: OnceLock<Arc<Vec<u8>>>,
    encoded: OnceLock<Arc<Vec<u8>>>,
    digest: OnceLock<ImageRef>,
}

impl GeneratedImage {
    pub(crate) fn procedural(
        width: u32,
        height: u32,
        provenance: Provenance,
        seed: u64,
        semantic_vec: EmbeddingVector,
        strength_used: Option<Strength>,
        payload_target: usize,
    ) -> Self {
        GeneratedImage {
            width,
            height,
            provenance,
            seed,
            semantic_vec: Some(semantic_vec),
            strength_used,
            body: Body::Procedural { payload_target },
            pixels: OnceLock::new(),
            encoded: OnceLock::new(),
            digest: OnceLock::new(),
        }
    }

    /// An image received from a model server; `body_len` is the size of the
    /// response that carried it.
    pub fn from_remote(
        encoded: Vec<u8>,
        body_len: usize,
        seed: u64,
        strength_used: Option<Strength>,
    ) -> Result<Self> {
        let (width, height, pixels) = decode_png(&encoded)?;
        Ok(GeneratedImage {
            width,
            height,
            provenance: Provenance::Remote,
            seed,
            semantic_vec: None,
            strength_used,
            body: Body::Remote { body_len },
            pixels: OnceLock::from(Arc::new(pixels)),
            encoded: OnceLock::from(Arc::new(encoded)),
            digest: OnceLock::new(),
        })
    }

    /// Rebuilds a mock image from its persisted lineage.
    pub fn restore_mock(
        width: u32,
        height: u32,
        provenance: Provenance,
        seed: u64,
        semantic_vec: EmbeddingVector,
        strength_used: Option<Strength>,
        payload_target: usize,
    ) -> Self {
        Self::procedural(
            width,
            height,
            provenance,
            seed,
            semantic_vec,
            strength_used,
            payload_target,
        )
    }

    /// Rebuilds a remote image from stored container bytes.
    pub fn restore_remote(encoded: Vec<u8>, body_len: usize, seed: u64) -> Result<Self> {
        Self::from_remote(encoded, body_len, seed, None)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn semantic_vec(&self) -> Option<&EmbeddingVector> {
        self.semantic_vec.as_ref()
    }

    /// Strength of the img2img step that produced this image.
    pub fn strength_used(&self) -> Option<Strength> {
        self.strength_used
    }

    /// Padding target of a mock container; zero for remote images.
    pub fn payload_target(&self) -> usize {
        match self.body {
            Body::Procedural { payload_target } => payload_target,
            Body::Remote { .. } => 0,
        }
    }

    /// Row-major RGB bytes, `width * height * 3` long.
    pub fn pixels(&self) -> &[u8] {
        self.pixels.get_or_init(|| {
            let vec = self
                .semantic_vec
                .as_ref()
                .expect("procedural images carry a semantic vector");
            Arc::new(render_bands(vec, self.seed, self.width, self.height))
        })
    }

    /// The PNG container exactly as it would be transmitted.
    pub fn encoded(&self) -> &[u8] {
        self.encoded.get_or_init(|| {
            let target = self.payload_target();
            Arc::new(
                encode_png(self.pixels(), self.width, self.height, target)
                    .expect("encoding an in-memory RGB raster cannot fail"),
            )
        })
    }

    /// Bytes that cross the network: the container length for mock images,
    /// the response body length for remote ones.
    pub fn payload_bytes(&self) -> usize {
        match self.body {
            Body::Procedural { .. } => self.encoded().len(),
            Body::Remote { body_len } => body_len,
        }
    }

    /// Hex SHA-256 of the encoded container.
    pub fn digest(&self) -> ImageRef {
        self.digest
            .get_or_init(|| ImageRef(hex::encode(Sha256::digest(self.encoded()))))
            .clone()
    }
}

impl PartialEq for GeneratedImage {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.provenance == other.provenance
            && self.seed == other.seed
            && self.semantic_vec == other.semantic_vec
            && self.strength_used == other.strength_used
            && self.pixels() == other.pixels()
    }
}

/// Horizontal bands, each split into tiles whose colors come from a seeded
/// hash of the latent vector.
fn render_bands(vec: &EmbeddingVector, seed: u64, width: u32, height: u32) -> Vec<u8> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for v in vec.as_slice() {
        hasher.update(v.to_le_bytes());
    }
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    let bands = rng.random_range(6..=12usize);
    let tiles = rng.random_range(4..=10usize);
    let palette: Vec<[u8; 3]> = (0..bands * tiles).map(|_| rng.random()).collect();

    let (w, h) = (width as usize, height as usize);
    let mut pixels = vec![0u8; w * h * 3];
    for (y, row) in pixels.chunks_exact_mut(w * 3).enumerate() {
        let band = y * bands / h.max(1);
        for (x, px) in row.chunks_exact_mut(3).enumerate() {
            let tile = x * tiles / w.max(1);
            px.copy_from_slice(&palette[band * tiles + tile]);
        }
    }
    pixels
}

/// Encodes RGB8 as PNG. When the bare container is shorter than
/// `payload_target`, an ancillary padding chunk brings it to exactly that size.
pub(crate) fn encode_png(
    pixels: &[u8],
    width: u32,
    height: u32,
    payload_target: usize,
) -> Result<Vec<u8>> {
    let write = |pad: Option<usize>| -> std::result::Result<Vec<u8>, png::EncodingError> {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Fast);
        enc.set_filter(png::Filter::Up);
        let mut writer = enc.write_header()?;
        writer.write_image_data(pixels)?;
        if let Some(n) = pad {
            writer.write_chunk(PAD_CHUNK, &vec![0u8; n])?;
        }
        writer.finish()?;
        Ok(out)
    };
    let bare = write(None).map_err(|e| Error::Image(e.to_string()))?;
    if bare.len() + CHUNK_OVERHEAD > payload_target {
        return Ok(bare);
    }
    let padded = write(Some(payload_target - bare.len() - CHUNK_OVERHEAD))
        .map_err(|e| Error::Image(e.to_string()))?;
    debug_assert_eq!(padded.len(), payload_target);
    Ok(padded)
}

pub(crate) fn decode_png(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>)> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::ProtocolError(format!("invalid PNG: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::ProtocolError("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::ProtocolError(format!("invalid PNG: {e}")))?;
    buf.truncate(info.buffer_size());
    let rgb = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => buf
            .chunks_exact(2)
            .flat_map(|p| [p[0], p[0], p[0]])
            .collect(),
        png::ColorType::Indexed => {
            return Err(Error::ProtocolError("unexpanded indexed PNG".into()))
        }
    };
    Ok((info.width, info.height, rgb))
}
