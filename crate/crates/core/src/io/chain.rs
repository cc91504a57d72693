use std::collections::BTreeMap;
use std::path::Path;

use crate::baselines::LinearChain;
use crate::error::{FusionError, Result};
use crate::evaluation::{quantile, Summary};
use crate::mcmc::{ChainOutput, Variant};
use crate::model::{CutoffVector, ParamState};

use super::export::{fmt_f64, CsvTable};

/// One scalar of a stored sample: parameter name, one-based index and value.
type Entry = (&'static str, String, f64);

fn vector(name: &'static str, v: &[f64], out: &mut Vec<Entry>) {
    for (j, x) in v.iter().enumerate() {
        out.push((name, (j + 1).to_string(), *x));
    }
}

fn matrix(name: &'static str, m: &[Vec<f64>], out: &mut Vec<Entry>) {
    for (i, row) in m.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            out.push((name, format!("{},{}", i + 1, j + 1), *x));
        }
    }
}

/// The sampled scalars of `s` under `variant`, in a fixed order. Cutoffs
/// are stored as their log-increments.
pub fn state_entries(s: &ParamState, variant: Variant) -> Vec<Entry> {
    let mut out = vec![("beta0", "1".to_string(), s.beta0)];
    vector("beta", &s.beta, &mut out);
    vector("theta_log_increment", s.theta.increments(), &mut out);
    if variant.uses_annotations() {
        let phi: Vec<Vec<f64>> = s.phi.iter().map(|c| c.increments().to_vec()).collect();
        matrix("phi_log_increment", &phi, &mut out);
        matrix("nu", &s.nu, &mut out);
        vector("nu_tilde", &s.nu_tilde, &mut out);
    }
    if variant.uses_confidences() {
        matrix("alpha", &s.alpha, &mut out);
        out.push(("omega0", "1".to_string(), s.omega0));
        vector("omega", &s.omega, &mut out);
    }
    out
}

fn linear_entries(chain: &LinearChain, t: usize) -> Vec<Entry> {
    let mut out = vec![("beta0", "1".to_string(), chain.beta0[t])];
    vector("beta", &chain.beta[t], &mut out);
    out.push(("sigma2", "1".to_string(), chain.sigma2[t]));
    out
}

fn write_entries(rows: impl Iterator<Item = (usize, Vec<Entry>)>, path: &Path) -> Result<()> {
    let mut t = CsvTable::new(&["iteration", "parameter", "index", "value"])?;
    for (it, entries) in rows {
        for (name, idx, v) in entries {
            t.row([it.to_string(), name.to_string(), idx, fmt_f64(v)])?;
        }
    }
    t.save(path)
}

/// Long-format `samples.csv` of a model chain.
pub fn write_samples(chain: &ChainOutput, path: &Path) -> Result<()> {
    write_entries(
        chain
            .iterations
            .iter()
            .zip(&chain.samples)
            .map(|(&it, s)| (it, state_entries(s, chain.variant))),
        path,
    )
}

/// Long-format `samples.csv` of a linear-baseline chain; iterations count
/// from the first kept draw.
pub fn write_linear_samples(chain: &LinearChain, path: &Path) -> Result<()> {
    write_entries((0..chain.beta0.len()).map(|t| (t + 1, linear_entries(chain, t))), path)
}

/// Posterior mean, standard deviation and central quantiles per scalar.
pub fn write_summary(draws: &BTreeMap<(String, String), Vec<f64>>, order: &[(String, String)], path: &Path) -> Result<()> {
    let mut t = CsvTable::new(&["parameter", "index", "mean", "sd", "q2.5", "q50", "q97.5"])?;
    for key in order {
        let v = &draws[key];
        let s = Summary::of(v).expect("every stored parameter has draws");
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - s.mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        } else {
            0.0
        };
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        t.row([
            key.0.clone(),
            key.1.clone(),
            fmt_f64(s.mean),
            fmt_f64(var.sqrt()),
            fmt_f64(quantile(&sorted, 0.025)),
            fmt_f64(s.median),
            fmt_f64(quantile(&sorted, 0.975)),
        ])?;
    }
    t.save(path)
}

/// Draws per scalar, plus the order in which scalars first appear.
pub fn collect_draws(per_sample: impl Iterator<Item = Vec<Entry>>) -> (BTreeMap<(String, String), Vec<f64>>, Vec<(String, String)>) {
    let mut map: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut order = Vec::new();
    for entries in per_sample {
        for (name, idx, v) in entries {
            let key = (name.to_string(), idx);
            map.entry(key.clone())
                .or_insert_with(|| {
                    order.push(key);
                    Vec::new()
                })
                .push(v);
        }
    }
    (map, order)
}

pub fn write_chain_summary(chain: &ChainOutput, path: &Path) -> Result<()> {
    let (draws, order) = collect_draws(chain.samples.iter().map(|s| state_entries(s, chain.variant)));
    write_summary(&draws, &order, path)
}

pub fn write_linear_summary(chain: &LinearChain, path: &Path) -> Result<()> {
    let (draws, order) = collect_draws((0..chain.beta0.len()).map(|t| linear_entries(chain, t)));
    write_summary(&draws, &order, path)
}

pub fn write_acceptance(chain: &ChainOutput, path: &Path) -> Result<()> {
    let mut t = CsvTable::new(&["block", "dimension", "scale", "proposals", "accepted", "rate"])?;
    for b in &chain.acceptance {
        t.row([
            b.block.clone(),
            b.dimension.to_string(),
            fmt_f64(b.scale),
            b.proposals.to_string(),
            b.accepted.to_string(),
            fmt_f64(b.rate()),
        ])?;
    }
    t.save(path)
}

pub fn write_trace(chain: &ChainOutput, path: &Path) -> Result<()> {
    let mut t = CsvTable::new(&["iteration", "log_posterior"])?;
    for (i, lp) in chain.log_post_trace.iter().enumerate() {
        t.row([(i + 1).to_string(), fmt_f64(*lp)])?;
    }
    t.save(path)
}

pub fn write_y_marginals(chain: &ChainOutput, path: &Path) -> Result<()> {
    let Some(m) = &chain.y_marginals else {
        return Err(FusionError::NotApplicable("chain has no latent categories".into()));
    };
    let l = m.first().map_or(0, Vec::len);
    let mut header = vec!["sequence_id".to_string()];
    header.extend((1..=l).map(|k| format!("p{k}")));
    let mut t = CsvTable::new(&header)?;
    for (id, row) in chain.sequence_ids.iter().zip(m) {
        let mut r = vec![id.clone()];
        r.extend(row.iter().map(|v| fmt_f64(*v)));
        t.row(r)?;
    }
    t.save(path)
}

/// Reads `y_marginals.csv` back as sequence ids and probability rows.
pub fn read_y_marginals(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let name = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        ids.push(rec[0].to_string());
        rows.push(
            rec.iter()
                .skip(1)
                .map(|f| f.parse::<f64>().map_err(|_| FusionError::data(&name, line, format!("bad number {f:?}"))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((ids, rows))
}

fn parse_index(name: &str, line: usize, idx: &str) -> Result<Vec<usize>> {
    idx.split(',')
        .map(|p| match p.trim().parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v - 1),
            _ => Err(FusionError::data(name, line, format!("bad index {idx:?}"))),
        })
        .collect()
}

fn set_vec(v: &mut Vec<f64>, i: usize, x: f64) {
    if v.len() <= i {
        v.resize(i + 1, 0.0);
    }
    v[i] = x;
}

fn set_mat(m: &mut Vec<Vec<f64>>, i: usize, j: usize, x: f64) {
    if m.len() <= i {
        m.resize(i + 1, Vec::new());
    }
    set_vec(&mut m[i], j, x);
}

/// Reads a model `samples.csv` back into states. Parameters a variant does
/// not sample are left empty; `theta` is always present.
pub fn read_samples(path: &Path) -> Result<(Vec<usize>, Vec<ParamState>)> {
    #[derive(Default)]
    struct Raw {
        beta0: f64,
        beta: Vec<f64>,
        theta: Vec<f64>,
        phi: Vec<Vec<f64>>,
        nu: Vec<Vec<f64>>,
        nu_tilde: Vec<f64>,
        alpha: Vec<Vec<f64>>,
        omega0: f64,
        omega: Vec<f64>,
    }
    let name = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let mut by_iter: BTreeMap<usize, Raw> = BTreeMap::new();
    let mut order: Vec<usize> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 4 {
            return Err(FusionError::data(&name, line, "expected 4 fields"));
        }
        let it: usize = rec[0]
            .parse()
            .map_err(|_| FusionError::data(&name, line, "bad iteration"))?;
        let v: f64 = rec[3]
            .parse()
            .map_err(|_| FusionError::data(&name, line, "bad value"))?;
        let ix = parse_index(&name, line, &rec[2])?;
        let raw = by_iter.entry(it).or_insert_with(|| {
            order.push(it);
            Raw::default()
        });
        let two = |ix: &[usize]| -> Result<(usize, usize)> {
            match ix {
                [i, j] => Ok((*i, *j)),
                _ => Err(FusionError::data(&name, line, "expected a two-part index")),
            }
        };
        match &rec[1] {
            "beta0" => raw.beta0 = v,
            "beta" => set_vec(&mut raw.beta, ix[0], v),
            "theta_log_increment" => set_vec(&mut raw.theta, ix[0], v),
            "phi_log_increment" => {
                let (i, j) = two(&ix)?;
                set_mat(&mut raw.phi, i, j, v)
            }
            "nu" => {
                let (i, j) = two(&ix)?;
                set_mat(&mut raw.nu, i, j, v)
            }
            "nu_tilde" => set_vec(&mut raw.nu_tilde, ix[0], v),
            "alpha" => {
                let (i, j) = two(&ix)?;
                set_mat(&mut raw.alpha, i, j, v)
            }
            "omega0" => raw.omega0 = v,
            "omega" => set_vec(&mut raw.omega, ix[0], v),
            other => return Err(FusionError::data(&name, line, format!("unknown parameter {other}"))),
        }
    }
    let states = order
        .iter()
        .map(|it| {
            let r = by_iter.remove(it).expect("inserted above");
            ParamState {
                beta0: r.beta0,
                beta: r.beta,
                theta: CutoffVector::from_increments(r.theta),
                phi: r.phi.into_iter().map(CutoffVector::from_increments).collect(),
                nu: r.nu,
                nu_tilde: r.nu_tilde,
                alpha: r.alpha,
                omega0: r.omega0,
                omega: r.omega,
                y: Vec::new(),
            }
        })
        .collect();
    Ok((order, states))
}
