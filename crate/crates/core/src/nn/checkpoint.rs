//! Checkpoint files.
//!
//! Layout (all integers and floats little-endian):
//! - magic bytes `"W1FE"`
//! - `u16` format version (currently 1)
//! - `u8` activation tag (0 = leaky_relu, 1 = tanh)
//! - `f64` activation alpha (0.0 for tanh)
//! - `u16` number of widths, then `u32` per width
//! - `f64` × P parameter values
//! - `f64` × P Adam first moments
//! - `f64` × P Adam second moments
//! - `u64` Adam step counter
//!
//! The Adam β/ε̂ constants are fixed by the optimizer and the learning rate
//! comes from run configuration, so neither is stored.

use super::{Activation, AdamState, MlpSpec, Params};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"W1FE";
const VERSION: u16 = 1;

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::checkpoint("truncated file"));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn checkpoint_save<S: Scalar>(
    params: &Params<S>,
    state: &AdamState<S>,
    path: &Path,
) -> Result<()> {
    let spec = params.spec();
    let p = params.len();
    if state.m.len() != p || state.v.len() != p {
        return Err(Error::checkpoint(format!(
            "optimizer state length {} does not match parameter count {p}",
            state.m.len()
        )));
    }
    let mut buf = Vec::with_capacity(32 + 24 * p);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let (tag, alpha) = match spec.hidden {
        Activation::LeakyRelu(a) => (0u8, a),
        Activation::Tanh => (1u8, 0.0),
    };
    buf.push(tag);
    push_f64(&mut buf, alpha);
    buf.extend_from_slice(&(spec.widths.len() as u16).to_le_bytes());
    for &w in &spec.widths {
        buf.extend_from_slice(&(w as u32).to_le_bytes());
    }
    for &v in params.values() {
        push_f64(&mut buf, v.to_f64_lossy());
    }
    for &v in &state.m {
        push_f64(&mut buf, v.to_f64_lossy());
    }
    for &v in &state.v {
        push_f64(&mut buf, v.to_f64_lossy());
    }
    buf.extend_from_slice(&state.t.to_le_bytes());
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Loads a checkpoint. The Adam learning rate is not part of the format and
/// must be supplied by the caller (it lives in run configuration).
pub fn checkpoint_load<S: Scalar>(path: &Path, lr: f64) -> Result<(Params<S>, AdamState<S>)> {
    let data = fs::read(path)?;
    let mut r = Reader {
        data: &data,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::checkpoint("bad magic bytes"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::checkpoint(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let tag = r.u8()?;
    let alpha = r.f64()?;
    let hidden = match tag {
        0 => Activation::LeakyRelu(alpha),
        1 => Activation::Tanh,
        other => return Err(Error::checkpoint(format!("unknown activation tag {other}"))),
    };
    let n_widths = r.u16()? as usize;
    let mut widths = Vec::with_capacity(n_widths);
    for _ in 0..n_widths {
        widths.push(r.u32()? as usize);
    }
    let spec = MlpSpec::new(widths, hidden)
        .map_err(|e| Error::checkpoint(format!("invalid stored spec: {e}")))?;
    let p = spec.param_count();

    let mut values = Vec::with_capacity(p);
    for _ in 0..p {
        values.push(S::of(r.f64()?));
    }
    let mut m = Vec::with_capacity(p);
    for _ in 0..p {
        m.push(S::of(r.f64()?));
    }
    let mut v = Vec::with_capacity(p);
    for _ in 0..p {
        v.push(S::of(r.f64()?));
    }
    let t = r.u64()?;
    if r.pos != data.len() {
        return Err(Error::checkpoint("trailing bytes after checkpoint payload"));
    }
    let params = Params::from_flat(spec, values)
        .map_err(|e| Error::checkpoint(format!("layout mismatch: {e}")))?;
    let state = AdamState {
        m,
        v,
        t,
        lr: S::of(lr),
    };
    Ok((params, state))
}

/// Like [`checkpoint_load`], but rejects files whose stored spec differs from
/// the expected architecture.
pub fn checkpoint_load_expecting<S: Scalar>(
    path: &Path,
    expected: &MlpSpec,
    lr: f64,
) -> Result<(Params<S>, AdamState<S>)> {
    let (params, state) = checkpoint_load(path, lr)?;
    if params.spec() != expected {
        return Err(Error::checkpoint(format!(
            "layout mismatch: file has widths {:?} ({}), expected {:?} ({})",
            params.spec().widths,
            params.spec().hidden.name(),
            expected.widths,
            expected.hidden.name(),
        )));
    }
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Params<f64>, AdamState<f64>) {
        let spec = MlpSpec::new(vec![2, 5, 1], Activation::LeakyRelu(0.2)).unwrap();
        let p: Params<f64> = Params::init(spec, 99);
        let mut state = AdamState::new(p.len(), 1e-3);
        for (i, (m, v)) in state.m.iter_mut().zip(state.v.iter_mut()).enumerate() {
            *m = i as f64 * 0.01;
            *v = i as f64 * 0.001;
        }
        state.t = 17;
        (p, state)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.w1fe");
        let (p, s) = sample();
        checkpoint_save(&p, &s, &path).unwrap();
        let (p2, s2) = checkpoint_load::<f64>(&path, 1e-3).unwrap();
        assert_eq!(p.values(), p2.values());
        assert_eq!(p.spec(), p2.spec());
        assert_eq!(s.m, s2.m);
        assert_eq!(s.v, s2.v);
        assert_eq!(s.t, s2.t);
    }

    #[test]
    fn wrong_spec_is_a_layout_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.w1fe");
        let (p, s) = sample();
        checkpoint_save(&p, &s, &path).unwrap();
        let other = MlpSpec::new(vec![2, 6, 1], Activation::LeakyRelu(0.2)).unwrap();
        match checkpoint_load_expecting::<f64>(&path, &other, 1e-3) {
            Err(Error::Checkpoint { reason }) => assert!(reason.contains("layout mismatch")),
            other => panic!("expected layout mismatch, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.w1fe");
        let (p, s) = sample();
        checkpoint_save(&p, &s, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        match checkpoint_load::<f64>(&path, 1e-3) {
            Err(Error::Checkpoint { reason }) => assert!(reason.contains("truncated")),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.w1fe");
        fs::write(&path, b"nope").unwrap();
        assert!(matches!(
            checkpoint_load::<f64>(&path, 1e-3),
            Err(Error::Checkpoint { .. })
        ));
    }
}
