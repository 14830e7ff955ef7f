//! Binary model format.
//!
//! Layout (little-endian): magic `PVEC`, `u32` version, `u64` dimensions
//! (D, V, P), length-prefixed JSON of the training parameters, `u64`
//! min_count, `u64` vocabulary size then `(u32 len, utf-8 bytes, u64 freq)`
//! per word, `u64` paragraph count then
//! length-prefixed keys, then the paragraph, output and input matrices each
//! as a `u64` element count followed by `f64` values.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::vocab::Vocab;
use super::{EmbedError, EmbeddingModel, TrainParams};

pub const MAGIC: &[u8; 4] = b"PVEC";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn put_matrix<W: Write>(w: &mut W, m: &[f64]) -> io::Result<()> {
    put_u64(w, m.len() as u64)?;
    for x in m {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_model<W: Write>(model: &EmbeddingModel, mut w: W) -> Result<(), EmbedError> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    put_u64(&mut w, model.dim() as u64)?;
    put_u64(&mut w, model.vocab.len() as u64)?;
    put_u64(&mut w, model.n_paragraphs() as u64)?;
    let params = serde_json::to_string(&model.params).map_err(|e| EmbedError::Corrupt(e.to_string()))?;
    put_str(&mut w, &params)?;
    put_u64(&mut w, model.vocab.min_count())?;
    put_u64(&mut w, model.vocab.len() as u64)?;
    for (word, freq) in model.vocab.entries() {
        put_str(&mut w, word)?;
        put_u64(&mut w, freq)?;
    }
    put_u64(&mut w, model.paragraph_keys.len() as u64)?;
    for k in &model.paragraph_keys {
        put_str(&mut w, k)?;
    }
    put_matrix(&mut w, &model.paragraphs)?;
    put_matrix(&mut w, &model.word_output)?;
    put_matrix(&mut w, &model.word_input)?;
    w.flush()?;
    Ok(())
}

pub fn save_model(model: &EmbeddingModel, path: &Path) -> Result<(), EmbedError> {
    write_model(model, BufWriter::new(File::create(path)?))
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, EmbedError> {
        let mut buf = Vec::new();
        let got = (&mut self.inner).take(n as u64).read_to_end(&mut buf)?;
        if got < n {
            return Err(EmbedError::TruncatedFile);
        }
        Ok(buf)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], EmbedError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => EmbedError::TruncatedFile,
            _ => EmbedError::Io(e),
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, EmbedError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, EmbedError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn string(&mut self) -> Result<String, EmbedError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.bytes(n)?).map_err(|_| EmbedError::Corrupt("invalid utf-8 string".into()))
    }

    fn matrix(&mut self) -> Result<Vec<f64>, EmbedError> {
        let n = self.u64()? as usize;
        let raw = self.bytes(n.checked_mul(8).ok_or_else(|| EmbedError::Corrupt("matrix size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

pub fn read_model<R: Read>(r: R) -> Result<EmbeddingModel, EmbedError> {
    let mut r = Reader { inner: r };
    if &r.array::<4>()? != MAGIC {
        return Err(EmbedError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(EmbedError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let dims = (r.u64()?, r.u64()?, r.u64()?);
    let params: TrainParams =
        serde_json::from_str(&r.string()?).map_err(|e| EmbedError::Corrupt(format!("parameters: {e}")))?;
    let min_count = r.u64()?;
    let n_words = r.u64()? as usize;
    let mut words = Vec::with_capacity(n_words.min(1 << 24));
    for _ in 0..n_words {
        let w = r.string()?;
        let f = r.u64()?;
        words.push((w, f));
    }
    let vocab = Vocab::from_counts(words, min_count)?;
    if vocab.len() != n_words {
        return Err(EmbedError::Corrupt("vocabulary entries below min_count".into()));
    }
    let n_keys = r.u64()? as usize;
    let mut keys = Vec::with_capacity(n_keys.min(1 << 24));
    for _ in 0..n_keys {
        keys.push(r.string()?);
    }
    let paragraphs = r.matrix()?;
    let word_output = r.matrix()?;
    let word_input = r.matrix()?;
    if dims != (params.vector_size as u64, n_words as u64, n_keys as u64) {
        return Err(EmbedError::Corrupt("header dimensions disagree with contents".into()));
    }
    EmbeddingModel::assemble(vocab, params, keys, paragraphs, word_output, word_input)
}

pub fn load_model(path: &Path) -> Result<EmbeddingModel, EmbedError> {
    read_model(BufReader::new(File::open(path)?))
}
