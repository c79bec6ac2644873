use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::NumArray;
use crate::error::{Error, Result};

const FORMAT_TAG: &str = "cmlab-params";
const FORMAT_VERSION: u32 = 1;

/// Named parameter arrays in insertion order.
///
/// Names are unique and an entry's shape never changes once inserted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, NumArray)>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: NumArray) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&NumArray> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Replace the values of an existing entry; the shape must match.
    pub fn set(&mut self, name: &str, value: NumArray) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        self.entries[i].1.same_shape(&value, "ParamStore::set")?;
        self.entries[i].1 = value;
        Ok(())
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut NumArray> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        Ok(&mut self.entries[i].1)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NumArray)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut NumArray)> {
        self.entries.iter_mut().map(|(n, v)| (n.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.len()).sum()
    }

    /// Same names and shapes, all values zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = Self::new();
        for (n, v) in &self.entries {
            out.insert(n.clone(), NumArray::zeros(v.shape()))
                .expect("names are unique");
        }
        out
    }

    /// True when both stores carry the same names with the same shapes, in order.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((a, x), (b, y))| a == b && x.shape() == y.shape())
    }

    /// Copy of every entry whose name starts with `prefix`.
    pub fn filter_prefix(&self, prefix: &str) -> Self {
        let mut out = Self::new();
        for (n, v) in &self.entries {
            if n.starts_with(prefix) {
                out.insert(n.clone(), v.clone()).expect("names are unique");
            }
        }
        out
    }

    /// Versioned text encoding. Values are written with Rust's shortest
    /// round-trip float formatting, so decoding restores identical bits.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{FORMAT_TAG} {FORMAT_VERSION} {}", self.entries.len())?;
        for (name, v) in &self.entries {
            let dims: Vec<String> = v.shape().iter().map(|d| d.to_string()).collect();
            writeln!(w, "{name} {} {}", v.shape().len(), dims.join(" "))?;
            let mut line = String::with_capacity(v.len() * 20);
            for (i, x) in v.data().iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&format!("{x:?}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(Error::Parse {
                    line: 0,
                    msg: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let (ln, header) = next("header")?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let bad = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        if parts.len() != 3 || parts[0] != FORMAT_TAG {
            return Err(bad(ln, "missing parameter file header"));
        }
        let version: u32 = parts[1].parse().map_err(|_| bad(ln, "bad version"))?;
        if version != FORMAT_VERSION {
            return Err(bad(ln, &format!("unsupported version {version}")));
        }
        let count: usize = parts[2].parse().map_err(|_| bad(ln, "bad entry count"))?;
        let mut store = Self::new();
        for _ in 0..count {
            let (ln, head) = next("entry header")?;
            let mut it = head.split_whitespace();
            let name = it.next().ok_or_else(|| bad(ln, "missing name"))?.to_string();
            let rank: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(ln, "bad rank"))?;
            let shape: Vec<usize> = it
                .map(|s| s.parse().map_err(|_| bad(ln, "bad extent")))
                .collect::<Result<_>>()?;
            if shape.len() != rank {
                return Err(bad(ln, "rank does not match extents"));
            }
            let (ln, body) = next("values")?;
            let data: Vec<f64> = body
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad(ln, "bad value")))
                .collect::<Result<_>>()?;
            let arr = NumArray::new(shape, data).map_err(|_| bad(ln, "value count"))?;
            store.insert(name, arr).map_err(|e| bad(ln, &e.to_string()))?;
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
