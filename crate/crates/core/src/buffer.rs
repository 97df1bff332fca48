//! Experience buffers and their binary file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "NCSB"  u32 version
//! u32 config_len  config_len bytes of env config text
//! u32 episode_count
//! per episode: u32 transitions
//!              transitions x (raster record, 4 x f64 action)
//!              final raster record
//! ```

use std::io::{self, Read, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{Action, EnvConfig, EnvError};
use crate::raster::{Raster, RasterError};

pub const BUFFER_MAGIC: &[u8; 4] = b"NCSB";
pub const BUFFER_VERSION: u32 = 1;
const MAX_CONFIG_LEN: u32 = 1 << 20;

#[derive(Debug, Error)]
pub enum BufferError {
    #[error("not a buffer file (bad magic)")]
    BadMagic,
    #[error("unsupported buffer version {0}")]
    Version(u32),
    #[error("buffer file is truncated")]
    Truncated,
    #[error("malformed buffer: {0}")]
    Malformed(String),
    #[error(transparent)]
    Config(#[from] EnvError),
    #[error(transparent)]
    Io(io::Error),
}

impl BufferError {
    /// True for content problems, false for I/O failures.
    pub fn is_format(&self) -> bool {
        !matches!(self, BufferError::Io(_))
    }
}

impl From<io::Error> for BufferError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            BufferError::Truncated
        } else {
            BufferError::Io(e)
        }
    }
}

impl From<RasterError> for BufferError {
    fn from(e: RasterError) -> Self {
        match e {
            RasterError::Io(io) => io.into(),
            other => BufferError::Malformed(other.to_string()),
        }
    }
}

/// One trajectory: `observations.len() == actions.len() + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub observations: Vec<Raster>,
    pub actions: Vec<Action>,
}

impl Episode {
    pub fn transitions(&self) -> impl Iterator<Item = (&Raster, &Action, &Raster)> {
        self.actions
            .iter()
            .enumerate()
            .map(|(t, a)| (&self.observations[t], a, &self.observations[t + 1]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperienceBuffer {
    /// Generating environment; its seed is the buffer seed.
    pub env_config: EnvConfig,
    pub episodes: Vec<Episode>,
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, BufferError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, BufferError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

impl ExperienceBuffer {
    pub fn transition_count(&self) -> usize {
        self.episodes.iter().map(|e| e.actions.len()).sum()
    }

    pub fn seed(&self) -> u64 {
        self.env_config.seed
    }

    pub fn validate(&self) -> Result<(), BufferError> {
        let size = self.env_config.image_size;
        for (i, ep) in self.episodes.iter().enumerate() {
            if ep.actions.is_empty() {
                return Err(BufferError::Malformed(format!("episode {i} has no transitions")));
            }
            if ep.observations.len() != ep.actions.len() + 1 {
                return Err(BufferError::Malformed(format!(
                    "episode {i} has {} observations for {} actions",
                    ep.observations.len(),
                    ep.actions.len()
                )));
            }
            if ep.observations.iter().any(|o| o.width() != size || o.height() != size) {
                return Err(BufferError::Malformed(format!("episode {i} raster size differs from config")));
            }
        }
        Ok(())
    }

    /// Buffer restricted to its first `ceil(fraction * episodes)` episodes
    /// (at least one).
    pub fn prefix_fraction(&self, fraction: f64) -> ExperienceBuffer {
        let n = self.episodes.len();
        let keep = ((fraction * n as f64).ceil() as usize).clamp(1.min(n), n);
        ExperienceBuffer {
            env_config: self.env_config.clone(),
            episodes: self.episodes[..keep].to_vec(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        let config = self.env_config.to_text();
        w.write_all(BUFFER_MAGIC)?;
        w.write_all(&BUFFER_VERSION.to_le_bytes())?;
        w.write_all(&(config.len() as u32).to_le_bytes())?;
        w.write_all(config.as_bytes())?;
        w.write_all(&(self.episodes.len() as u32).to_le_bytes())?;
        for ep in &self.episodes {
            w.write_all(&(ep.actions.len() as u32).to_le_bytes())?;
            for (obs, action) in ep.observations.iter().zip(&ep.actions) {
                obs.write_to(&mut w)?;
                for v in action.to_array() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            ep.observations[ep.actions.len()].write_to(&mut w)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, BufferError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BUFFER_MAGIC {
            return Err(BufferError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != BUFFER_VERSION {
            return Err(BufferError::Version(version));
        }
        let len = read_u32(&mut r)?;
        if len > MAX_CONFIG_LEN {
            return Err(BufferError::Malformed("config block too large".into()));
        }
        let mut text = vec![0u8; len as usize];
        r.read_exact(&mut text)?;
        let text = String::from_utf8(text).map_err(|_| BufferError::Malformed("config is not UTF-8".into()))?;
        let env_config = EnvConfig::from_text(&text)?;
        let count = read_u32(&mut r)?;
        let mut episodes = Vec::new();
        for _ in 0..count {
            let t = read_u32(&mut r)? as usize;
            let mut observations = Vec::with_capacity(t.min(1024) + 1);
            let mut actions = Vec::with_capacity(t.min(1024));
            for _ in 0..t {
                observations.push(Raster::read_from(&mut r)?);
                let mut a = [0.0; 4];
                for v in &mut a {
                    *v = read_f64(&mut r)?;
                }
                actions.push(Action::from_array(a));
            }
            observations.push(Raster::read_from(&mut r)?);
            episodes.push(Episode {
                observations,
                actions,
            });
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(BufferError::Malformed("trailing bytes after last episode".into()));
        }
        let buffer = ExperienceBuffer {
            env_config,
            episodes,
        };
        buffer.validate()?;
        Ok(buffer)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BufferError> {
        Self::read_from(bytes)
    }

    /// SHA-256 of the serialized buffer, hex encoded.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        self.write_to(HashWriter(&mut hasher)).expect("hashing cannot fail");
        hex::encode(hasher.finalize())
    }
}

struct HashWriter<'a>(&'a mut Sha256);

impl Write for HashWriter<'_> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}
