//! Self-describing text checkpoints.
//!
//! ```text
//! fogsched-checkpoint v1
//! kind ppo
//! meta gamma 0.9
//! network actor
//! input 64
//! hidden 64
//! output 6
//! activation tanh
//! step 120
//! params 4614
//! <one value per line, row-major>
//! adam_m 4614
//! ...
//! adam_v 4614
//! ...
//! end
//! ```
//!
//! Values are written in shortest round-trip exponent form, so a save/load
//! cycle is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

use super::{Activation, AdamState, MlpParams};

const MAGIC: &str = "fogsched-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSection {
    pub name: String,
    pub params: MlpParams,
    pub adam: Option<AdamState>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub networks: Vec<NetworkSection>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self { kind: kind.into(), ..Default::default() }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn push_network(&mut self, name: &str, params: &MlpParams, adam: Option<&AdamState>) {
        self.networks.push(NetworkSection { name: name.to_string(), params: params.clone(), adam: adam.cloned() });
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key).ok_or_else(|| Error::Checkpoint(format!("missing meta `{key}`")))?;
        raw.parse().map_err(|_| Error::Checkpoint(format!("bad meta `{key}` = `{raw}`")))
    }

    pub fn network(&self, name: &str) -> Result<&NetworkSection> {
        self.networks
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing network `{name}`")))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "kind {}", self.kind)?;
        for (k, v) in &self.meta {
            writeln!(w, "meta {k} {v}")?;
        }
        for net in &self.networks {
            let p = &net.params;
            writeln!(w, "network {}", net.name)?;
            writeln!(w, "input {}", p.input)?;
            writeln!(w, "hidden {}", p.hidden)?;
            writeln!(w, "output {}", p.output)?;
            writeln!(w, "activation {}", p.activation.tag())?;
            writeln!(w, "step {}", net.adam.as_ref().map_or(0, |a| a.step))?;
            write_block(&mut w, "params", &p.data)?;
            if let Some(adam) = &net.adam {
                write_block(&mut w, "adam_m", &adam.m)?;
                write_block(&mut w, "adam_v", &adam.v)?;
            }
        }
        writeln!(w, "end")?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = move || -> Result<String> {
            lines.next().ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?.map_err(Error::from)
        };
        if next()? != MAGIC {
            return Err(Error::Checkpoint("bad header".into()));
        }
        let kind = field(&next()?, "kind")?.to_string();
        let mut ck = Checkpoint::new(kind);
        let mut line = next()?;
        while let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest.split_once(' ').ok_or_else(|| Error::Checkpoint(format!("bad meta line `{line}`")))?;
            ck.meta.push((k.to_string(), v.to_string()));
            line = next()?;
        }
        loop {
            if line == "end" {
                return Ok(ck);
            }
            let name = field(&line, "network")?.to_string();
            let input = parse_usize(&field(&next()?, "input")?)?;
            let hidden = parse_usize(&field(&next()?, "hidden")?)?;
            let output = parse_usize(&field(&next()?, "output")?)?;
            let act_tag = next()?;
            let activation = Activation::from_tag(field(&act_tag, "activation")?)
                .ok_or_else(|| Error::Checkpoint(format!("unknown activation in `{act_tag}`")))?;
            let step: u64 = field(&next()?, "step")?
                .parse()
                .map_err(|_| Error::Checkpoint("bad step".into()))?;
            let expected = MlpParams::param_count(input, hidden, output);
            let data = read_block(&mut next, "params", expected)?;
            let params = MlpParams { input, hidden, output, activation, data };
            line = next()?;
            let adam = if line.starts_with("adam_m ") {
                let m = read_block_with_header(&line, &mut next, "adam_m", expected)?;
                let v = read_block(&mut next, "adam_v", expected)?;
                line = next()?;
                Some(AdamState { m, v, step })
            } else {
                None
            };
            ck.networks.push(NetworkSection { name, params, adam });
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = File::create(path)?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn write_block<W: Write>(w: &mut W, tag: &str, values: &[f64]) -> Result<()> {
    writeln!(w, "{tag} {}", values.len())?;
    for v in values {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::Checkpoint(format!("expected `{key}`, found `{line}`")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Checkpoint(format!("bad integer `{s}`")))
}

fn read_block(next: &mut impl FnMut() -> Result<String>, tag: &str, expected: usize) -> Result<Vec<f64>> {
    let header = next()?;
    read_block_with_header(&header, next, tag, expected)
}

fn read_block_with_header(
    header: &str,
    next: &mut impl FnMut() -> Result<String>,
    tag: &str,
    expected: usize,
) -> Result<Vec<f64>> {
    let count = parse_usize(field(header, tag)?)?;
    if count != expected {
        return Err(Error::Checkpoint(format!("{tag}: expected {expected} values, header says {count}")));
    }
    (0..count)
        .map(|_| {
            let l = next()?;
            l.trim().parse::<f64>().map_err(|_| Error::Checkpoint(format!("bad value `{l}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn roundtrip(ck: &Checkpoint) -> Checkpoint {
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        Checkpoint::read_from(buf.as_slice()).unwrap()
    }

    #[test]
    fn networks_and_moments_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = MlpParams::init(4, 3, 2, Activation::Tanh, &mut rng);
        let mut adam = AdamState::for_params(&p);
        adam.step = 17;
        adam.m[3] = 1e-300;
        adam.v[0] = 0.1 + 0.2;
        let q = MlpParams::init(2, 2, 1, Activation::Relu, &mut rng);
        let mut ck = Checkpoint::new("ppo").with_meta("gamma", 0.9).with_meta("note", "two words");
        ck.push_network("actor", &p, Some(&adam));
        ck.push_network("critic", &q, None);
        let back = roundtrip(&ck);
        assert_eq!(back, ck);
        assert_eq!(back.meta("note"), Some("two words"));
        assert_eq!(back.meta_parse::<f64>("gamma").unwrap(), 0.9);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let mut ck = Checkpoint::new("mlp");
        ck.push_network("net", &MlpParams::zeros(1, 1, 1, Activation::Tanh), None);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let cut = &buf[..buf.len() / 2];
        assert!(Checkpoint::read_from(cut).is_err());
        assert!(Checkpoint::read_from(&b"garbage\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn values_roundtrip_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 4)) {
            let mut p = MlpParams::zeros(1, 1, 1, Activation::Identity);
            p.data = values;
            let mut ck = Checkpoint::new("mlp");
            ck.push_network("net", &p, None);
            let back = roundtrip(&ck);
            let got = &back.networks[0].params.data;
            for (a, b) in got.iter().zip(&p.data) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
