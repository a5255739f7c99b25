//! Model artifact: one self-describing binary file holding all four models.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic     8 bytes  "RSCMODEL"
//! version   u32
//! endian    u32      0x01020304, reads back as 04 03 02 01 on disk
//! created   u64      unix seconds
//! config    32 bytes sha-256 of the training configuration
//! count     u32      number of target sections
//! sections  ...      encoder, bins, network tensors, training summary
//! checksum  32 bytes sha-256 of everything above
//! ```
//!
//! Weights are stored as raw f64 bit patterns, so a load/save cycle is
//! byte-identical.

use std::fs;
use std::path::Path;

use rescast_core::discretize::{BinSpec, FitMethod};
use rescast_core::encode::{CategoricalColumn, CategoricalFeature, EncoderSpec, NumericColumn, NumericFeature, NumericTransform};
use rescast_core::ingest::{Target, Vocabularies, Vocabulary};
use rescast_core::model::{ModelError, TrainSummary};
use rescast_core::nnet::{Architecture, HiddenLayer, Network, StopReason};
use rescast_core::{ModelSet, TargetModel};
use sha2::{Digest, Sha256};

pub const MAGIC: [u8; 8] = *b"RSCMODEL";
pub const FORMAT_VERSION: u32 = 1;
const ENDIAN_MARK: u32 = 0x0102_0304;
const DIGEST_LEN: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("corrupt artifact: {0}")]
    Corrupt(String),
    #[error("artifact format version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("artifact is not servable: {0}")]
    NotServable(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn corrupt(msg: impl Into<String>) -> ArtifactError {
    ArtifactError::Corrupt(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub version: u32,
    pub created_unix: u64,
    pub config_fingerprint: [u8; DIGEST_LEN],
    pub models: Vec<TargetModel>,
}

pub fn fingerprint(config: &str) -> [u8; DIGEST_LEN] {
    Sha256::digest(config.as_bytes()).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl ModelArtifact {
    pub fn new(models: &ModelSet, config_fingerprint: [u8; DIGEST_LEN], created_unix: u64) -> Self {
        ModelArtifact { version: FORMAT_VERSION, created_unix, config_fingerprint, models: models.models().to_vec() }
    }

    /// Checks that every target is present exactly once and consistent.
    pub fn model_set(&self) -> Result<ModelSet, ArtifactError> {
        Ok(ModelSet::from_models(self.models.clone())?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&MAGIC);
        w.u32(self.version);
        w.u32(ENDIAN_MARK);
        w.u64(self.created_unix);
        w.0.extend_from_slice(&self.config_fingerprint);
        w.len(self.models.len());
        for m in &self.models {
            write_model(&mut w, m);
        }
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArtifactError> {
        if bytes.len() < MAGIC.len() + 8 {
            return Err(corrupt("truncated header"));
        }
        if bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(ArtifactError::VersionMismatch { found: version, expected: FORMAT_VERSION });
        }
        match u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) {
            ENDIAN_MARK => {}
            m if m.swap_bytes() == ENDIAN_MARK => return Err(corrupt("big-endian artifact")),
            _ => return Err(corrupt("bad endianness marker")),
        }
        if bytes.len() < 16 + 8 + DIGEST_LEN + 4 + DIGEST_LEN {
            return Err(corrupt("truncated header"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch (truncated or modified)"));
        }
        let mut r = Reader { buf: body, pos: 16 };
        let created_unix = r.u64()?;
        let config_fingerprint: [u8; DIGEST_LEN] = r.take(DIGEST_LEN)?.try_into().expect("digest length");
        let n = r.len(8)?;
        let mut models = Vec::with_capacity(n);
        for _ in 0..n {
            models.push(read_model(&mut r)?);
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(ModelArtifact { version, created_unix, config_fingerprint, models })
    }
}

/// Writes through a temporary file and a rename so readers never see a partial artifact.
pub fn save_artifact(path: &Path, artifact: &ModelArtifact) -> Result<(), ArtifactError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, artifact.to_bytes())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_artifact(path: &Path) -> Result<ModelArtifact, ArtifactError> {
    ModelArtifact::from_bytes(&fs::read(path)?)
}

pub fn load_model_set(path: &Path) -> Result<ModelSet, ArtifactError> {
    load_artifact(path)?.model_set()
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("length fits in u32"));
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn block(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArtifactError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated section"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ArtifactError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ArtifactError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, ArtifactError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64, ArtifactError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    /// A length prefix, rejected early if the remaining bytes cannot hold
    /// that many items of `min_item` bytes.
    fn len(&mut self, min_item: usize) -> Result<usize, ArtifactError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.buf.len() - self.pos {
            return Err(corrupt("length prefix exceeds file"));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String, ArtifactError> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid utf-8"))
    }
    fn block(&mut self) -> Result<Vec<f64>, ArtifactError> {
        let n = usize::try_from(self.u64()?).map_err(|_| corrupt("block too large"))?;
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(corrupt("truncated tensor"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

fn code<T: PartialEq + Copy>(all: &[T], v: T) -> u8 {
    all.iter().position(|&x| x == v).expect("listed variant") as u8
}

fn decode<T: Copy>(all: &[T], c: u8, what: &str) -> Result<T, ArtifactError> {
    all.get(c as usize).copied().ok_or_else(|| corrupt(format!("unknown {what} code {c}")))
}

const TRANSFORMS: [NumericTransform; 2] = [NumericTransform::Log1p, NumericTransform::Identity];
const FIT_METHODS: [FitMethod; 2] = [FitMethod::Quantile, FitMethod::Explicit];
const STOP_REASONS: [StopReason; 3] = [StopReason::EarlyStop, StopReason::MaxEpochs, StopReason::NanAbort];

fn write_vocab(w: &mut Writer, v: &Vocabulary) {
    w.len(v.tokens().len());
    for t in v.tokens() {
        w.str(t);
    }
}

fn read_vocab(r: &mut Reader<'_>) -> Result<Vocabulary, ArtifactError> {
    let n = r.len(4)?;
    let tokens = (0..n).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
    let v = Vocabulary::from_tokens(tokens.iter().map(String::as_str));
    if v.tokens() != tokens.as_slice() {
        return Err(corrupt("vocabulary not in canonical order"));
    }
    Ok(v)
}

fn write_model(w: &mut Writer, m: &TargetModel) {
    w.u8(code(&Target::ALL, m.target));

    let e = &m.encoder;
    write_vocab(w, &e.vocabularies.processing_type);
    write_vocab(w, &e.vocabularies.framework);
    w.len(e.categorical.len());
    for c in &e.categorical {
        w.u8(code(&CategoricalFeature::ALL, c.feature));
        w.len(c.vocab_size);
        w.len(c.embed_dim);
    }
    w.len(e.numeric.len());
    for c in &e.numeric {
        w.u8(code(&NumericFeature::ALL, c.feature));
        w.u8(code(&TRANSFORMS, c.transform));
        w.f64(c.mean);
        w.f64(c.std);
    }
    w.len(e.dropped.len());
    for &f in &e.dropped {
        w.u8(code(&NumericFeature::ALL, f));
    }

    w.u8(code(&FIT_METHODS, m.bins.fit_method()));
    w.block(m.bins.edges());
    w.f64(m.bins.cap());

    let net = &m.network;
    let a = net.architecture();
    w.len(a.vocab_sizes.len());
    for (&v, &d) in a.vocab_sizes.iter().zip(&a.embed_dims) {
        w.len(v);
        w.len(d);
    }
    w.len(a.n_numeric);
    w.len(a.hidden.len());
    for &h in &a.hidden {
        w.len(h);
    }
    w.len(a.n_classes);
    for table in net.embeddings() {
        w.block(table);
    }
    for layer in net.hidden_layers() {
        for t in [&layer.weight, &layer.gamma, &layer.beta, &layer.running_mean, &layer.running_var] {
            w.block(t);
        }
    }
    w.block(net.output_weight());
    w.block(net.output_bias());

    let s = &m.summary;
    w.len(s.epochs_run);
    w.len(s.best_epoch);
    w.f64(s.best_val_accuracy);
    w.u8(code(&STOP_REASONS, s.stop_reason));
}

fn read_model(r: &mut Reader<'_>) -> Result<TargetModel, ArtifactError> {
    let target = decode(&Target::ALL, r.u8()?, "target")?;

    let vocabularies = Vocabularies { processing_type: read_vocab(r)?, framework: read_vocab(r)? };
    let n = r.len(9)?;
    let mut categorical = Vec::with_capacity(n);
    for _ in 0..n {
        let feature = decode(&CategoricalFeature::ALL, r.u8()?, "categorical feature")?;
        categorical.push(CategoricalColumn { feature, vocab_size: r.u32()? as usize, embed_dim: r.u32()? as usize });
    }
    let n = r.len(18)?;
    let mut numeric = Vec::with_capacity(n);
    for _ in 0..n {
        let feature = decode(&NumericFeature::ALL, r.u8()?, "numeric feature")?;
        let transform = decode(&TRANSFORMS, r.u8()?, "transform")?;
        numeric.push(NumericColumn { feature, transform, mean: r.f64()?, std: r.f64()? });
    }
    let n = r.len(1)?;
    let dropped = (0..n)
        .map(|_| decode(&NumericFeature::ALL, r.u8()?, "numeric feature"))
        .collect::<Result<Vec<_>, _>>()?;
    let encoder = EncoderSpec { vocabularies, categorical, numeric, dropped };

    let method = decode(&FIT_METHODS, r.u8()?, "fit method")?;
    let edges = r.block()?;
    let cap = r.f64()?;
    let bins = BinSpec::from_parts(target, edges, method, cap).map_err(|e| corrupt(format!("bins: {e}")))?;

    let n_cat = r.len(8)?;
    let mut vocab_sizes = Vec::with_capacity(n_cat);
    let mut embed_dims = Vec::with_capacity(n_cat);
    for _ in 0..n_cat {
        vocab_sizes.push(r.u32()? as usize);
        embed_dims.push(r.u32()? as usize);
    }
    let n_numeric = r.u32()? as usize;
    let n_hidden = r.len(4)?;
    let hidden = (0..n_hidden).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>, ArtifactError>>()?;
    let n_classes = r.u32()? as usize;
    let arch = Architecture { vocab_sizes, embed_dims, n_numeric, hidden, n_classes };
    let embeddings = (0..n_cat).map(|_| r.block()).collect::<Result<Vec<_>, _>>()?;
    let mut layers = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        layers.push(HiddenLayer {
            weight: r.block()?,
            gamma: r.block()?,
            beta: r.block()?,
            running_mean: r.block()?,
            running_var: r.block()?,
        });
    }
    let out_weight = r.block()?;
    let out_bias = r.block()?;
    let network =
        Network::from_parts(arch, embeddings, layers, out_weight, out_bias).map_err(|e| corrupt(format!("network: {e}")))?;
    if network.architecture().vocab_sizes != encoder.vocab_sizes() || network.architecture().n_numeric != encoder.n_numeric() {
        return Err(corrupt("encoder does not match network input"));
    }

    let summary = TrainSummary {
        epochs_run: r.u32()? as usize,
        best_epoch: r.u32()? as usize,
        best_val_accuracy: r.f64()?,
        stop_reason: decode(&STOP_REASONS, r.u8()?, "stop reason")?,
    };
    let model = TargetModel { target, encoder, bins, network, summary };
    model.validate()?;
    Ok(model)
}
