//! Single-leaf, single-bit mutations of JSON documents.

use rand::Rng;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum Seg {
    Key(String),
    Index(usize),
}

pub type Path = Vec<Seg>;

pub fn path_string(path: &Path) -> String {
    path.iter()
        .map(|s| match s {
            Seg::Key(k) => k.clone(),
            Seg::Index(i) => i.to_string(),
        })
        .collect::<Vec<_>>()
        .join(".")
}

pub fn top_key(path: &Path) -> &str {
    match path.first() {
        Some(Seg::Key(k)) => k,
        _ => "",
    }
}

/// Every string and number leaf.
pub fn leaves(v: &Value) -> Vec<Path> {
    let mut out = Vec::new();
    walk(v, &mut Vec::new(), &mut out);
    out
}

fn walk(v: &Value, here: &mut Path, out: &mut Vec<Path>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                here.push(Seg::Key(k.clone()));
                walk(x, here, out);
                here.pop();
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                here.push(Seg::Index(i));
                walk(x, here, out);
                here.pop();
            }
        }
        Value::String(s) if !s.is_empty() => out.push(here.clone()),
        Value::Number(_) => out.push(here.clone()),
        _ => {}
    }
}

fn at<'a>(v: &'a mut Value, path: &Path) -> &'a mut Value {
    path.iter().fold(v, |v, seg| match seg {
        Seg::Key(k) => &mut v[k.as_str()],
        Seg::Index(i) => &mut v[*i],
    })
}

fn is_hex(s: &str) -> bool {
    s.len().is_multiple_of(2) && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Flips one bit of the leaf at `path`. Hex strings flip a bit of the
/// decoded bytes; other strings flip the low bit of one ASCII character;
/// integers flip one of their low 16 bits; reals flip a mantissa bit.
pub fn flip_bit<R: Rng>(v: &mut Value, path: &Path, rng: &mut R) {
    let leaf = at(v, path);
    match leaf {
        Value::String(s) if is_hex(s) => {
            let mut bytes = hex::decode(&*s).unwrap();
            let i = rng.gen_range(0..bytes.len());
            bytes[i] ^= 1 << rng.gen_range(0..8);
            *s = hex::encode(bytes);
        }
        Value::String(s) => {
            let mut bytes = s.clone().into_bytes();
            let ascii: Vec<usize> = (0..bytes.len()).filter(|&i| bytes[i].is_ascii_alphanumeric()).collect();
            let i = if ascii.is_empty() { 0 } else { ascii[rng.gen_range(0..ascii.len())] };
            bytes[i] ^= 1;
            *s = String::from_utf8(bytes).unwrap_or_else(|_| format!("{s}x"));
        }
        Value::Number(n) => {
            *leaf = if let Some(u) = n.as_u64() {
                Value::from(u ^ (1 << rng.gen_range(0..16)))
            } else if let Some(i) = n.as_i64() {
                Value::from(i ^ (1 << rng.gen_range(0..16)))
            } else {
                let f = n.as_f64().unwrap();
                Value::from(f64::from_bits(f.to_bits() ^ (1 << rng.gen_range(0..52))))
            };
        }
        other => panic!("not a leaf: {other:?}"),
    }
}
