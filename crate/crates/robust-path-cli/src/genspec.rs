//! Generator specs of the form `family(key=value,...)`.
//!
//! Path families: `two-vertex(k)`, `disjoint(k,len)`, `substitution(t)`,
//! `cover-path(seed,u,kappa)`, `sp(seed,m,k,max)`, `dag(seed,n,m,k,max)`,
//! `tw2(seed,n,m,k,max)`. The `cover(seed,u,kappa[,rule])` family yields a
//! set-cover file instead; `rule` is `2c1` (default) or `3c2`.

use std::collections::BTreeMap;

use anyhow::anyhow;

use robust_path::gen::{random_dag, random_set_cover, random_sp, random_tw2};
use robust_path::hardness::{
    gen_3choose2_from_2choose1, gen_disjoint_paths_gap, gen_maximin_path,
    gen_substitution_family, gen_two_vertex_gap, SetCoverInstance,
};
use robust_path::Instance;

use crate::CliError;

pub enum GenOutput {
    Path(Instance),
    Cover(SetCoverInstance),
}

/// Default simple-path cap for series-parallel rejection sampling.
const SP_PATH_CAP: u128 = 1 << 20;

struct Params<'a> {
    spec: &'a str,
    map: BTreeMap<&'a str, &'a str>,
}

impl<'a> Params<'a> {
    fn get(&mut self, key: &str) -> Result<&'a str, CliError> {
        self.map
            .remove(key)
            .ok_or_else(|| CliError::usage(anyhow!("spec `{}` is missing `{key}`", self.spec)))
    }

    fn usize(&mut self, key: &str) -> Result<usize, CliError> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| CliError::usage(anyhow!("spec `{}`: `{key}={raw}` is not a count", self.spec)))
    }

    fn u64(&mut self, key: &str) -> Result<u64, CliError> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| CliError::usage(anyhow!("spec `{}`: `{key}={raw}` is not a seed", self.spec)))
    }

    fn u32(&mut self, key: &str) -> Result<u32, CliError> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| CliError::usage(anyhow!("spec `{}`: `{key}={raw}` is not a cost", self.spec)))
    }

    fn finish(self) -> Result<(), CliError> {
        if let Some(key) = self.map.keys().next() {
            return Err(CliError::usage(anyhow!("spec `{}`: unknown key `{key}`", self.spec)));
        }
        Ok(())
    }
}

fn parse(spec: &str) -> Result<(&str, Params<'_>), CliError> {
    let spec = spec.trim();
    let open = spec
        .find('(')
        .ok_or_else(|| CliError::usage(anyhow!("spec `{spec}` needs a parameter list")))?;
    let close = spec
        .strip_suffix(')')
        .ok_or_else(|| CliError::usage(anyhow!("spec `{spec}` is missing the closing paren")))?;
    let family = &spec[..open];
    let body = &close[open + 1..];
    let mut map = BTreeMap::new();
    for part in body.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| CliError::usage(anyhow!("spec `{spec}`: `{part}` is not key=value")))?;
        if map.insert(key.trim(), value.trim()).is_some() {
            return Err(CliError::usage(anyhow!("spec `{spec}`: duplicate key `{key}`")));
        }
    }
    Ok((family, Params { spec, map }))
}

fn build_cover(mut p: Params<'_>) -> Result<SetCoverInstance, CliError> {
    let seed = p.u64("seed")?;
    let universe = p.usize("u")?;
    let kappa = p.usize("kappa")?;
    let rule = p.map.remove("rule").unwrap_or("2c1");
    let spec = p.spec;
    p.finish()?;
    let base = random_set_cover(seed, universe, kappa);
    match rule {
        "2c1" => Ok(base),
        "3c2" => gen_3choose2_from_2choose1(&base)
            .map_err(|e| CliError::usage(anyhow!("spec `{spec}`: {e}"))),
        other => Err(CliError::usage(anyhow!(
            "spec `{spec}`: rule `{other}` is not 2c1 or 3c2"
        ))),
    }
}

pub fn build(spec: &str) -> Result<GenOutput, CliError> {
    let (family, mut p) = parse(spec)?;
    match family {
        "two-vertex" => {
            let k = p.usize("k")?;
            p.finish()?;
            if k == 0 {
                return Err(CliError::usage(anyhow!("spec `{spec}`: k must be positive")));
            }
            Ok(GenOutput::Path(gen_two_vertex_gap(k)))
        }
        "disjoint" => {
            let k = p.usize("k")?;
            let len = p.usize("len")?;
            p.finish()?;
            if k == 0 || len == 0 {
                return Err(CliError::usage(anyhow!("spec `{spec}`: k and len must be positive")));
            }
            Ok(GenOutput::Path(gen_disjoint_paths_gap(k, len)))
        }
        "substitution" => {
            let t = p.usize("t")?;
            p.finish()?;
            let inst = gen_substitution_family(t)
                .map_err(|e| CliError::usage(anyhow!("spec `{spec}`: {e}")))?;
            Ok(GenOutput::Path(inst))
        }
        "cover" => Ok(GenOutput::Cover(build_cover(p)?)),
        "cover-path" => {
            if p.map.get("rule").copied().unwrap_or("2c1") != "2c1" {
                return Err(CliError::usage(anyhow!(
                    "spec `{spec}`: cover-path requires the 2-choose-1 rule"
                )));
            }
            let sc = build_cover(p)?;
            let inst = gen_maximin_path(&sc)
                .map_err(|e| CliError::usage(anyhow!("spec `{spec}`: {e}")))?;
            Ok(GenOutput::Path(inst))
        }
        "sp" => {
            let seed = p.u64("seed")?;
            let m = p.usize("m")?;
            let k = p.usize("k")?;
            let max = p.u32("max")?;
            p.finish()?;
            Ok(GenOutput::Path(random_sp(seed, m, k, max, SP_PATH_CAP)))
        }
        "dag" => {
            let seed = p.u64("seed")?;
            let n = p.usize("n")?;
            let m = p.usize("m")?;
            let k = p.usize("k")?;
            let max = p.u32("max")?;
            p.finish()?;
            Ok(GenOutput::Path(random_dag(seed, n, m, k, max)))
        }
        "tw2" => {
            let seed = p.u64("seed")?;
            let n = p.usize("n")?;
            let m = p.usize("m")?;
            let k = p.usize("k")?;
            let max = p.u32("max")?;
            p.finish()?;
            Ok(GenOutput::Path(random_tw2(seed, n, m, k, max)))
        }
        other => Err(CliError::usage(anyhow!("unknown generator family `{other}`"))),
    }
}
