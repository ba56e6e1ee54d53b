//! Minimal neural-network substrate: an index-addressed parameter store,
//! matching gradient store, Adam, and a binary checkpoint format.
//!
//! All math is f64 and fully deterministic. Layers (in [`layers`]) hold only
//! parameter ids plus shapes; forward passes take `&ParamStore` and backward
//! passes write into a caller-owned [`GradStore`]. That split lets batch
//! items run forward+backward in parallel against shared parameters, with
//! per-item gradient stores reduced in input order afterwards.

pub mod layers;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use crate::util::Fnv64;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: corrupt checkpoint: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("parameter layout mismatch: {0}")]
    LayoutMismatch(String),
}

/// Handle to one parameter tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, tensor: Array2<f64>) -> ParamId {
        debug_assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter name {name}"
        );
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        ParamId(self.names.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.tensors[id.0]
    }

    pub fn n_tensors(&self) -> usize {
        self.tensors.len()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn tensor_by_index(&self, i: usize) -> &Array2<f64> {
        &self.tensors[i]
    }

    pub fn name_by_index(&self, i: usize) -> &str {
        &self.names[i]
    }

    /// Perturb one scalar in place; used by finite-difference checks.
    pub fn nudge(&mut self, tensor: usize, flat: usize, delta: f64) {
        let t = &mut self.tensors[tensor];
        let cols = t.ncols();
        t[[flat / cols, flat % cols]] += delta;
    }

    pub fn read_scalar(&self, tensor: usize, flat: usize) -> f64 {
        let t = &self.tensors[tensor];
        let cols = t.ncols();
        t[[flat / cols, flat % cols]]
    }

    /// Copy values from another store with the identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<(), NnError> {
        if self.names != other.names {
            return Err(NnError::LayoutMismatch(format!(
                "{} vs {} tensors",
                self.names.len(),
                other.names.len()
            )));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            if dst.dim() != src.dim() {
                return Err(NnError::LayoutMismatch("tensor shape".to_string()));
            }
            dst.assign(src);
        }
        Ok(())
    }

    // -- checkpoint format ---------------------------------------------------
    //
    // magic "VQCK", version u32, echo_len u32, echo utf-8, count u32, then per
    // tensor: name_len u32, name, rows u32, cols u32, f64 LE data; trailing
    // FNV-1a 64 of everything before it.

    pub fn save(&self, path: &Path, echo: &str) -> Result<(), NnError> {
        let mut out = Vec::new();
        out.extend_from_slice(b"VQCK");
        out.extend_from_slice(&1u32.to_le_bytes());
        let echo_bytes = echo.as_bytes();
        out.extend_from_slice(&(echo_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(echo_bytes);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in self.names.iter().zip(&self.tensors) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut h = Fnv64::new();
        h.update(&out);
        out.extend_from_slice(&h.finish().to_le_bytes());
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| NnError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
        std::fs::write(path, out).map_err(|e| NnError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<(ParamStore, String), NnError> {
        let bytes = std::fs::read(path).map_err(|e| NnError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let corrupt = |reason: &str| NnError::Corrupt {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        if bytes.len() < 8 + 8 || &bytes[0..4] != b"VQCK" {
            return Err(corrupt("bad magic"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 8);
        let mut h = Fnv64::new();
        h.update(body);
        if h.finish() != u64::from_le_bytes(trailer.try_into().unwrap()) {
            return Err(corrupt("checksum mismatch"));
        }
        let mut pos = 4;
        let mut take = |n: usize| -> Result<&[u8], NnError> {
            if pos + n > body.len() {
                return Err(NnError::Corrupt {
                    path: path.display().to_string(),
                    reason: "truncated".to_string(),
                });
            }
            let s = &body[pos..pos + n];
            pos += n;
            Ok(s)
        };
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != 1 {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let echo_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let echo = String::from_utf8(take(echo_len)?.to_vec())
            .map_err(|_| corrupt("echo not utf-8"))?;
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(name_len)?.to_vec())
                .map_err(|_| corrupt("name not utf-8"))?;
            let rows = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let cols = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let data = take(rows * cols * 8)?;
            let vals: Vec<f64> = data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Array2::from_shape_vec((rows, cols), vals)
                .map_err(|_| corrupt("tensor shape"))?;
            store.add(&name, t);
        }
        if pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok((store, echo))
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients aligned index-for-index with a [`ParamStore`].
pub struct GradStore {
    tensors: Vec<Array2<f64>>,
}

impl GradStore {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            tensors: params.tensors.iter().map(|t| Array2::zeros(t.dim())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.tensors[id.0]
    }

    pub fn tensor_by_index(&self, i: usize) -> &Array2<f64> {
        &self.tensors[i]
    }

    pub fn add_assign(&mut self, other: &GradStore) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            *a += b;
        }
    }

    pub fn read_scalar(&self, tensor: usize, flat: usize) -> f64 {
        let t = &self.tensors[tensor];
        let cols = t.ncols();
        t[[flat / cols, flat % cols]]
    }
}

/// Adam with bias correction; one moment pair per tensor.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.tensors.iter().map(|t| Array2::zeros(t.dim())).collect(),
            v: params.tensors.iter().map(|t| Array2::zeros(t.dim())).collect(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &GradStore) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.tensors.len() {
            let g = &grads.tensors[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            m.zip_mut_with(g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            v.zip_mut_with(g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            let t = &mut params.tensors[i];
            ndarray::Zip::from(t).and(&*m).and(&*v).for_each(|t, &m, &v| {
                let mhat = m / b1t;
                let vhat = v / b2t;
                *t -= self.lr * mhat / (vhat.sqrt() + self.eps);
            });
        }
    }
}

/// Parse a checkpoint echo block of `key=value` lines.
pub fn parse_echo(echo: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in echo.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    map
}

/// Central finite-difference check of `n_picks` randomly chosen scalar
/// parameters against an analytic gradient. Returns the worst relative
/// error, where the denominator is floored at `denom_floor` so directions
/// the loss is exactly invariant to (true gradient zero) are not failed on
/// finite-difference rounding noise. `loss_fn` must be a pure function of
/// the store.
pub fn finite_diff_check<F>(
    params: &mut ParamStore,
    grads: &GradStore,
    loss_fn: F,
    n_picks: usize,
    h: f64,
    denom_floor: f64,
    seed: u64,
) -> f64
where
    F: Fn(&ParamStore) -> f64,
{
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_picks {
        let ti = rng.gen_range(0..params.n_tensors());
        let len = params.tensor_by_index(ti).len();
        let fi = rng.gen_range(0..len);
        params.nudge(ti, fi, h);
        let up = loss_fn(params);
        params.nudge(ti, fi, -2.0 * h);
        let down = loss_fn(params);
        params.nudge(ti, fi, h);
        let fd = (up - down) / (2.0 * h);
        let analytic = grads.read_scalar(ti, fi);
        let denom = fd.abs().max(analytic.abs()).max(denom_floor);
        let rel = (fd - analytic).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck");
        let mut store = ParamStore::new();
        store.add("a", Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f64));
        store.add("b", Array2::from_elem((1, 4), -0.5));
        store.save(&path, "k=v\nx=1\n").unwrap();
        let (loaded, echo) = ParamStore::load(&path).unwrap();
        assert_eq!(echo, "k=v\nx=1\n");
        assert_eq!(loaded.n_tensors(), 2);
        assert_eq!(loaded.get(ParamId(0)), store.get(ParamId(0)));

        // flip one payload byte: checksum must catch it
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            ParamStore::load(&path),
            Err(NnError::Corrupt { .. })
        ));
    }

    #[test]
    fn adam_descends_on_quadratic() {
        let mut params = ParamStore::new();
        let id = params.add("x", Array2::from_elem((1, 3), 5.0));
        let mut opt = Adam::new(&params, 0.1);
        for _ in 0..200 {
            let mut grads = GradStore::zeros_like(&params);
            let x = params.get(id).clone();
            grads.get_mut(id).assign(&(2.0 * &x));
            opt.step(&mut params, &grads);
        }
        for v in params.get(id).iter() {
            assert!(v.abs() < 0.1, "{v}");
        }
    }
}
