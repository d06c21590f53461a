//! Parsers for the compound flag values.

use anyhow::{bail, ensure, Context, Result};
use icls::data::SyntheticSpec;

/// Parses a comma-separated list of unlabeled sizes. An ellipsis element
/// continues the progression set by the two values before it (geometric when
/// their ratio is a whole number above one, arithmetic otherwise) up to the
/// value after it, e.g. `2,4,...,1024`.
pub fn u_schedule(text: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let mut out: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < parts.len() {
        if parts[i] == "..." {
            ensure!(out.len() >= 2, "'...' needs two values before it");
            let end: usize = parts
                .get(i + 1)
                .context("'...' needs an end value after it")?
                .parse()
                .with_context(|| format!("bad schedule value {:?}", parts[i + 1]))?;
            let (a, b) = (out[out.len() - 2], out[out.len() - 1]);
            ensure!(b > a, "schedule must increase before '...'");
            let next = |v: usize| {
                if a > 0 && b % a == 0 && b / a > 1 {
                    v * (b / a)
                } else {
                    v + (b - a)
                }
            };
            let mut v = next(b);
            while v < end {
                out.push(v);
                v = next(v);
            }
            out.push(end);
            i += 2;
        } else {
            let v: usize = parts[i]
                .parse()
                .with_context(|| format!("bad schedule value {:?}", parts[i]))?;
            out.push(v);
            i += 1;
        }
    }
    ensure!(!out.is_empty(), "empty schedule");
    ensure!(
        out.windows(2).all(|w| w[0] < w[1]),
        "schedule values must be strictly increasing"
    );
    Ok(out)
}

/// Parses `dim=2,sep=2,n=2000[,scale=1]`.
pub fn synthetic(text: &str) -> Result<(SyntheticSpec, usize)> {
    let mut spec = SyntheticSpec::new(2, 2.0);
    let mut n = 2000;
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item
            .split_once('=')
            .with_context(|| format!("expected key=value, got {item:?}"))?;
        let bad = || format!("bad value for {key}: {value:?}");
        match key {
            "dim" | "d" => spec.dim = value.parse().with_context(bad)?,
            "sep" | "separation" => spec.separation = value.parse().with_context(bad)?,
            "scale" => spec.scale = value.parse().with_context(bad)?,
            "n" => n = value.parse().with_context(bad)?,
            _ => bail!("unknown synthetic parameter {key:?}"),
        }
    }
    Ok((spec, n))
}
