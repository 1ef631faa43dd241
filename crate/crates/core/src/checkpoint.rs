//! Binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "CGCKPT\0\0" | version u32 | config TOML (u64 length + bytes)
//! generation u64 | cell count u64
//! per cell: generator genome | discriminator genome | generator Adam | discriminator Adam
//!   genome = learning rate f64 | layer count u64 | (in u64, out u64, activation u8)* | params (u64 + f64*)
//!   adam   = t u64 | beta1 f64 | beta2 f64 | epsilon f64 | m (u64 + f64*) | v (u64 + f64*)
//! SHA-256 of everything above (32 bytes)
//! ```
//!
//! Loading verifies the digest before interpreting anything, so a truncated
//! or corrupted file never yields a partial population.

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::coevolution::CellOptimizers;
use crate::config::{parse_config_str, ExperimentConfig};
use crate::error::{Error, Result};
use crate::gan::{GanPair, Genome};
use crate::nn::{Activation, AdamState, LayerSpec, Network};
use crate::orchestrator::{Cell, Population};

pub const MAGIC: &[u8; 8] = b"CGCKPT\0\0";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn floats(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    fn genome(&mut self, g: &Genome) {
        self.f64(g.learning_rate);
        let layers = g.network.layers();
        self.u64(layers.len() as u64);
        for l in layers {
            self.u64(l.input_dim as u64);
            self.u64(l.output_dim as u64);
            self.0.push(match l.activation {
                Activation::Tanh => 0,
                Activation::Sigmoid => 1,
                Activation::Identity => 2,
            });
        }
        self.floats(g.network.params());
    }

    fn adam(&mut self, a: &AdamState) {
        self.u64(a.t);
        self.f64(a.beta1);
        self.f64(a.beta2);
        self.f64(a.epsilon);
        self.floats(&a.m);
        self.floats(&a.v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("unexpected end of data")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> std::result::Result<usize, String> {
        let n = self.u64()?;
        usize::try_from(n).ok().filter(|&n| n <= self.buf.len()).ok_or_else(|| format!("implausible length {n}"))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn floats(&mut self) -> std::result::Result<Vec<f64>, String> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn genome(&mut self) -> std::result::Result<Genome, String> {
        let lr = self.f64()?;
        let n = self.len()?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let input = self.len()?;
            let output = self.len()?;
            let act = match self.take(1)?[0] {
                0 => Activation::Tanh,
                1 => Activation::Sigmoid,
                2 => Activation::Identity,
                other => return Err(format!("unknown activation tag {other}")),
            };
            layers.push(LayerSpec::new(input, output, act));
        }
        let params = self.floats()?;
        let net = Network::from_params(layers, params).map_err(|e| e.to_string())?;
        Genome::new(net, lr).map_err(|e| e.to_string())
    }

    fn adam(&mut self) -> std::result::Result<AdamState, String> {
        let t = self.u64()?;
        let (beta1, beta2, epsilon) = (self.f64()?, self.f64()?, self.f64()?);
        let (m, v) = (self.floats()?, self.floats()?);
        if m.len() != v.len() {
            return Err("Adam moment lengths differ".into());
        }
        Ok(AdamState { m, v, t, beta1, beta2, epsilon })
    }
}

pub fn encode(pop: &Population, cfg: &ExperimentConfig) -> Result<Vec<u8>> {
    if cfg.topology != pop.topology {
        return Err(Error::Config("checkpoint config topology differs from the population".into()));
    }
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let text = cfg.to_toml()?;
    w.u64(text.len() as u64);
    w.0.extend_from_slice(text.as_bytes());
    w.u64(pop.generation);
    w.u64(pop.cells.len() as u64);
    for cell in &pop.cells {
        w.genome(&cell.center.generator);
        w.genome(&cell.center.discriminator);
        w.adam(&cell.optimizers.generator);
        w.adam(&cell.optimizers.discriminator);
    }
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    Ok(w.0)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(Population, ExperimentConfig)> {
    let err = |reason: String| Error::Checkpoint { path: path.to_path_buf(), reason };
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
        return Err(err(if bytes.starts_with(MAGIC) || bytes.len() < MAGIC.len() {
            "file is truncated".into()
        } else {
            "not a checkpoint file (bad magic)".into()
        }));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(err("integrity digest mismatch (file truncated or corrupted)".into()));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(err(format!("unsupported format version {version}, expected {FORMAT_VERSION}")));
    }
    let mut r = Reader { buf: body, pos: 12 };
    let parse = |r: &mut Reader| -> std::result::Result<(Population, ExperimentConfig), String> {
        let n = r.len()?;
        let text = std::str::from_utf8(r.take(n)?).map_err(|e| e.to_string())?;
        let cfg = parse_config_str(text, std::iter::empty()).map_err(|e| e.to_string())?;
        let generation = r.u64()?;
        let count = r.len()?;
        if count != cfg.topology.population_size() {
            return Err(format!("{count} cells stored for a {}-cell topology", cfg.topology.population_size()));
        }
        let mut cells = Vec::with_capacity(count);
        for _ in 0..count {
            let (g, d) = (r.genome()?, r.genome()?);
            let optimizers = CellOptimizers { generator: r.adam()?, discriminator: r.adam()? };
            if optimizers.generator.m.len() != g.network.param_count()
                || optimizers.discriminator.m.len() != d.network.param_count()
            {
                return Err("Adam state does not match its network".into());
            }
            let center = GanPair::new(g, d).map_err(|e| e.to_string())?;
            cells.push(Cell { center, optimizers });
        }
        if r.pos != r.buf.len() {
            return Err("trailing bytes after the last cell".into());
        }
        Ok((Population { topology: cfg.topology, cells, generation }, cfg))
    };
    parse(&mut r).map_err(err)
}

/// Writes to a sibling temporary file and renames it into place.
pub fn checkpoint_save(pop: &Population, cfg: &ExperimentConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(pop, cfg)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<(Population, ExperimentConfig)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    decode(&bytes, path)
}
