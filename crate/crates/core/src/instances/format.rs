//! Plain-text instance files.
//!
//! ```text
//! relim-instance v1
//! num_contexts 2
//! num_actions 2
//! num_regressors 3
//! truth_index 1
//! reward_kind bernoulli
//! weights 0.5 0.5
//! regressor 0
//! 0.1 0.9
//! 0.4 0.2
//! regressor 1
//! ...
//! ```
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! reading a file back reproduces every value bit for bit. Blank lines and
//! lines starting with `#` are ignored.

use std::path::Path;

use crate::error::{Error, Result};
use crate::instances::Instance;
use crate::model::{ContextSpace, Regressor, RegressorClass};

const MAGIC: &str = "relim-instance v1";

pub fn render_instance(instance: &Instance) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let class = instance.regressors();
    let join = |xs: &[f64]| {
        xs.iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "num_contexts {}", instance.num_contexts()).unwrap();
    writeln!(out, "num_actions {}", instance.num_actions()).unwrap();
    writeln!(out, "num_regressors {}", class.len()).unwrap();
    writeln!(out, "truth_index {}", instance.truth_index()).unwrap();
    writeln!(out, "reward_kind {}", instance.reward_kind().as_str()).unwrap();
    writeln!(out, "weights {}", join(instance.contexts().weights())).unwrap();
    for (i, f) in class.members().iter().enumerate() {
        writeln!(out, "regressor {i}").unwrap();
        for x in 0..f.num_contexts() {
            writeln!(out, "{}", join(f.row(x))).unwrap();
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Filter<std::iter::Enumerate<std::str::Lines<'a>>, fn(&(usize, &str)) -> bool>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        fn keep(l: &(usize, &str)) -> bool {
            let t = l.1.trim();
            !t.is_empty() && !t.starts_with('#')
        }
        Self {
            inner: text.lines().enumerate().filter(keep as fn(&(usize, &str)) -> bool),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(n, l)| (n + 1, l.trim()))
            .ok_or_else(|| Error::input(format!("instance file ended before {what}")))
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next_line(key)?;
        match line.split_once(char::is_whitespace) {
            Some((k, rest)) if k == key => Ok((n, rest.trim())),
            _ => Err(Error::input(format!("line {n}: expected `{key} ...`, found `{line}`"))),
        }
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let (n, v) = self.keyed(key)?;
        v.parse()
            .map_err(|_| Error::input(format!("line {n}: `{v}` is not a valid {key}")))
    }
}

fn parse_floats(n: usize, text: &str, expected: usize) -> Result<Vec<f64>> {
    let vals = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::input(format!("line {n}: `{t}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != expected {
        return Err(Error::input(format!(
            "line {n}: expected {expected} values, found {}",
            vals.len()
        )));
    }
    Ok(vals)
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let mut lines = Lines::new(text);
    let (n, magic) = lines.next_line("header")?;
    if magic != MAGIC {
        return Err(Error::input(format!("line {n}: not an instance file (expected `{MAGIC}`)")));
    }
    let nx = lines.keyed_usize("num_contexts")?;
    let k = lines.keyed_usize("num_actions")?;
    let nr = lines.keyed_usize("num_regressors")?;
    let truth = lines.keyed_usize("truth_index")?;
    let (n, kind) = lines.keyed("reward_kind")?;
    if kind != "bernoulli" {
        return Err(Error::input(format!("line {n}: unsupported reward kind `{kind}`")));
    }
    let (n, w) = lines.keyed("weights")?;
    let contexts = ContextSpace::new(parse_floats(n, w, nx)?)?;
    let mut members = Vec::with_capacity(nr);
    for i in 0..nr {
        let idx = lines.keyed_usize("regressor")?;
        if idx != i {
            return Err(Error::input(format!("regressor blocks out of order: found {idx}, expected {i}")));
        }
        let mut values = Vec::with_capacity(nx * k);
        for _ in 0..nx {
            let (n, row) = lines.next_line("regressor row")?;
            values.extend(parse_floats(n, row, k)?);
        }
        members.push(Regressor::new(nx, k, values)?);
    }
    if let Ok((n, extra)) = lines.next_line("end") {
        return Err(Error::input(format!("line {n}: trailing content `{extra}`")));
    }
    let instance = Instance::new(contexts, RegressorClass::new(members)?, truth)?;
    instance.audit_realizability()?;
    Ok(instance)
}

pub fn write_instance(path: impl AsRef<Path>, instance: &Instance) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_instance(instance)).map_err(|e| Error::io(path, e))
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instance(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_lower_bound, gen_random_tabular};
    use proptest::prelude::*;

    #[test]
    fn lower_bound_round_trip() {
        let inst = gen_lower_bound(2, 27, 3, 1000, 0.25).unwrap();
        let text = render_instance(&inst);
        assert_eq!(parse_instance(&text).unwrap(), inst);
    }

    #[test]
    fn rejects_malformed() {
        let inst = gen_random_tabular(1, 2, 2, 2).unwrap();
        let text = render_instance(&inst);
        assert!(parse_instance(&text.replace("bernoulli", "gaussian")).is_err());
        assert!(parse_instance(&text.replace("truth_index", "truth")).is_err());
        assert!(parse_instance(&format!("{text}0.5 0.5\n")).is_err());
        let missing_row = &text[..text.trim_end().rfind('\n').unwrap()];
        assert!(parse_instance(missing_row).is_err());
        assert!(parse_instance("").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), nx in 1usize..6, k in 2usize..5, n in 2usize..6) {
            let inst = gen_random_tabular(seed, nx, k, n).unwrap();
            let text = render_instance(&inst);
            let back = parse_instance(&text).unwrap();
            prop_assert_eq!(render_instance(&back), text);
            for (a, b) in inst.regressors().members().iter().zip(back.regressors().members()) {
                for (u, v) in a.values().iter().zip(b.values()) {
                    prop_assert_eq!(u.to_bits(), v.to_bits());
                }
            }
        }
    }
}
