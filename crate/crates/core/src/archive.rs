//! Versioned manifest-plus-raw-arrays container for learned artifacts.
//!
//! ```text
//! funclearn-archive v1
//! kind encoder
//! dtype f32
//! meta seed 7
//! tensor conv1.weight 64 5
//! end
//! <little-endian values of every tensor, in manifest order>
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub const MAGIC: &str = "funclearn-archive";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Archive<T> {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<T>)>,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn check_token(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(Error::Invalid(format!("{what} {s:?} must be a non-empty token without whitespace")));
    }
    Ok(())
}

impl<T: Scalar> Archive<T> {
    pub fn new(kind: &str) -> Self {
        Self { kind: kind.to_string(), meta: Vec::new(), tensors: Vec::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, name: &str, tensor: Tensor<T>) {
        self.tensors.push((name.to_string(), tensor));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_parse<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.meta(key).ok_or_else(|| parse_err(format!("archive lacks meta key {key}")))?;
        raw.parse().map_err(|_| parse_err(format!("bad value for {key}: {raw}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t).ok_or_else(|| parse_err(format!("archive lacks tensor {name}")))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        check_token(&self.kind, "kind")?;
        writeln!(w, "{MAGIC} v{VERSION}")?;
        writeln!(w, "kind {}", self.kind)?;
        writeln!(w, "dtype {}", T::DTYPE)?;
        for (k, v) in &self.meta {
            check_token(k, "meta key")?;
            if v.contains('\n') {
                return Err(Error::Invalid(format!("meta value for {k} spans lines")));
            }
            writeln!(w, "meta {k} {v}")?;
        }
        for (name, t) in &self.tensors {
            check_token(name, "tensor name")?;
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            writeln!(w, "tensor {name} {}", dims.join(" "))?;
        }
        writeln!(w, "end")?;
        let mut buf = Vec::new();
        for (_, t) in &self.tensors {
            buf.clear();
            for v in t.data() {
                v.write_le(&mut buf);
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        let mut next = |r: &mut R| -> Result<String> {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(parse_err("archive manifest ends before `end`"));
            }
            Ok(line.trim_end_matches('\n').to_string())
        };
        let head = next(&mut r)?;
        let version = head
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| parse_err("not a funclearn archive"))?;
        if version != VERSION {
            return Err(parse_err(format!("archive version {version} is not supported (expected {VERSION})")));
        }
        let kind = next(&mut r)?.strip_prefix("kind ").ok_or_else(|| parse_err("missing kind line"))?.to_string();
        let dtype = next(&mut r)?;
        if dtype != format!("dtype {}", T::DTYPE) {
            return Err(parse_err(format!("archive has `{dtype}`, expected dtype {}", T::DTYPE)));
        }
        let mut archive = Archive::new(&kind);
        let mut shapes = Vec::new();
        loop {
            let l = next(&mut r)?;
            if l == "end" {
                break;
            } else if let Some(rest) = l.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                archive.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = l.strip_prefix("tensor ") {
                let mut parts = rest.split(' ');
                let name = parts.next().unwrap_or_default().to_string();
                let dims = parts.map(|d| d.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>();
                shapes.push((name, dims.map_err(|_| parse_err(format!("bad tensor line: {l}")))?));
            } else {
                return Err(parse_err(format!("unexpected manifest line: {l}")));
            }
        }
        for (name, shape) in shapes {
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * T::BYTES];
            r.read_exact(&mut raw).map_err(|_| parse_err(format!("truncated data for tensor {name}")))?;
            let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            archive.tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(parse_err("trailing bytes after the last tensor"));
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let mut a = Archive::<f64>::new("demo").with_meta("seed", 3).with_meta("note", "two words");
        a.push("w", Tensor::from_vec(&[2, 2], vec![0.1, -2.5, 1e-300, f64::MAX]).unwrap());
        a.push("b", Tensor::from_vec(&[1], vec![7.0]).unwrap());
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        let back = Archive::<f64>::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.meta("note"), Some("two words"));
        assert!(Archive::<f32>::read_from(buf.as_slice()).is_err());
        buf.pop();
        assert!(Archive::<f64>::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn version_guard() {
        let text = format!("{MAGIC} v99\nkind x\ndtype f64\nend\n");
        assert!(matches!(Archive::<f64>::read_from(text.as_bytes()), Err(Error::Parse(_))));
    }
}
