//! Entropy bookkeeping on small dense joint distributions.
//!
//! The demo checks that the drop in diagnostic uncertainty after observing a
//! new evidence variable, `H(D | E) - H(D | E, e)`, equals the conditional
//! mutual information `I(D; e | E)` and is never negative. All quantities are
//! in bits.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seeding;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InfoError {
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("duplicate variable {0:?}")]
    DuplicateVariable(String),
    #[error("table has {got} entries, support sizes imply {expected}")]
    Shape { expected: usize, got: usize },
    #[error("probabilities must be non-negative and sum to 1 (sum = {0})")]
    NotNormalized(f64),
    #[error("{0} may not be conditioned on itself")]
    SelfConditioning(String),
    #[error("the new evidence may not be the diagnosis variable")]
    NewIsTarget,
}

/// Dense joint table, row-major with the last variable varying fastest.
/// The first variable is the diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    names: Vec<String>,
    cards: Vec<usize>,
    probs: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(names: Vec<String>, cards: Vec<usize>, probs: Vec<f64>) -> Result<Self, InfoError> {
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(InfoError::DuplicateVariable(n.clone()));
            }
        }
        let expected: usize = cards.iter().product();
        if names.len() != cards.len() || probs.len() != expected || cards.contains(&0) {
            return Err(InfoError::Shape {
                expected,
                got: probs.len(),
            });
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-12 {
            return Err(InfoError::NotNormalized(sum));
        }
        Ok(DiscreteJoint { names, cards, probs })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn diagnosis(&self) -> &str {
        &self.names[0]
    }

    pub fn var(&self, name: &str) -> Result<usize, InfoError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| InfoError::UnknownVariable(name.to_string()))
    }

    fn vars(&self, names: &[&str]) -> Result<Vec<usize>, InfoError> {
        let mut out: Vec<usize> = Vec::new();
        for n in names {
            let v = self.var(n)?;
            if !out.contains(&v) {
                out.push(v);
            }
        }
        Ok(out)
    }

    /// Marginal over `vars`, as a dense table in the order given.
    fn marginal(&self, vars: &[usize]) -> Vec<f64> {
        let size: usize = vars.iter().map(|&v| self.cards[v]).product();
        let mut out = vec![0.0; size];
        let mut assignment = vec![0usize; self.cards.len()];
        for &p in &self.probs {
            let mut idx = 0;
            for &v in vars {
                idx = idx * self.cards[v] + assignment[v];
            }
            out[idx] += p;
            // advance the odometer
            for d in (0..assignment.len()).rev() {
                assignment[d] += 1;
                if assignment[d] < self.cards[d] {
                    break;
                }
                assignment[d] = 0;
            }
        }
        out
    }

    /// Joint entropy of `vars` in bits; 0 for the empty set.
    pub fn entropy(&self, vars: &[&str]) -> Result<f64, InfoError> {
        let vars = self.vars(vars)?;
        Ok(self.marginal(&vars).iter().map(|&p| plogp(p)).sum::<f64>().max(0.0))
    }
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// `H(target | given)` by direct summation of `-p(t, g) log p(t, g) / p(g)`.
pub fn conditional_entropy(joint: &DiscreteJoint, target: &str, given: &[&str]) -> Result<f64, InfoError> {
    let t = joint.var(target)?;
    let g = joint.vars(given)?;
    if g.contains(&t) {
        return Err(InfoError::SelfConditioning(target.to_string()));
    }
    let given_size: usize = g.iter().map(|&v| joint.cards[v]).product();
    let mut vars = vec![t];
    vars.extend(&g);
    let tg = joint.marginal(&vars);
    let pg = joint.marginal(&g);
    let mut h = 0.0;
    for (i, &p) in tg.iter().enumerate() {
        if p > 0.0 {
            h -= p * (p / pg[i % given_size]).log2();
        }
    }
    Ok(h.max(0.0))
}

/// `(delta_h, cmi)` for adding `new` to the evidence set `acquired`.
///
/// `delta_h` is the difference of two conditional entropies; `cmi` is
/// assembled separately from the joint entropies of four marginals.
pub fn entropy_reduction(joint: &DiscreteJoint, acquired: &[&str], new: &str) -> Result<(f64, f64), InfoError> {
    let d = joint.diagnosis().to_string();
    if new == d {
        return Err(InfoError::NewIsTarget);
    }
    joint.var(new)?;
    if acquired.contains(&new) {
        return Err(InfoError::SelfConditioning(new.to_string()));
    }
    let mut with_new: Vec<&str> = acquired.to_vec();
    with_new.push(new);
    let delta_h = conditional_entropy(joint, &d, acquired)? - conditional_entropy(joint, &d, &with_new)?;

    let mut d_a = vec![d.as_str()];
    d_a.extend(acquired);
    let mut d_new_a = d_a.clone();
    d_new_a.push(new);
    let cmi = joint.entropy(&d_a)? + joint.entropy(&with_new)? - joint.entropy(&d_new_a)? - joint.entropy(acquired)?;
    Ok((delta_h, cmi))
}

/// Random dense joint over `n_vars` variables named `D, e1, e2, ...`.
///
/// Roughly one table in four gets exact zeros to exercise `0 log 0`.
pub fn random_joint<R: Rng>(rng: &mut R, cards: &[usize]) -> DiscreteJoint {
    let size: usize = cards.iter().product();
    let sparse = rng.gen_bool(0.25);
    let mut w: Vec<f64> = (0..size)
        .map(|_| if sparse && rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() + 1e-3 })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    // fold rounding drift into the largest entry
    let drift = 1.0 - w.iter().sum::<f64>();
    let max_i = (0..size).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap_or(0);
    w[max_i] += drift;
    let names = (0..cards.len())
        .map(|i| if i == 0 { "D".to_string() } else { format!("e{i}") })
        .collect();
    DiscreteJoint::new(names, cards.to_vec(), w).expect("normalized by construction")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub trials: usize,
    pub max_abs_gap: f64,
    pub min_delta_h: f64,
}

/// Runs `trials` random checks on joints of up to four binary variables.
pub fn demo(seed: u64, trials: usize) -> DemoSummary {
    let mut rng = seeding::stream(seed, &[b"entropy-demo"]);
    let mut max_abs_gap: f64 = 0.0;
    let mut min_delta_h = f64::INFINITY;
    for _ in 0..trials {
        let n = rng.gen_range(2..=4);
        let joint = random_joint(&mut rng, &vec![2; n]);
        let evidence: Vec<&str> = joint.names()[1..].iter().map(String::as_str).collect();
        let new = evidence[rng.gen_range(0..evidence.len())];
        let acquired: Vec<&str> = evidence.iter().copied().filter(|&e| e != new && rng.gen_bool(0.5)).collect();
        let (dh, cmi) = entropy_reduction(&joint, &acquired, new).expect("valid by construction");
        max_abs_gap = max_abs_gap.max((dh - cmi).abs());
        min_delta_h = min_delta_h.min(dh);
    }
    DemoSummary {
        trials,
        max_abs_gap,
        min_delta_h: if trials == 0 { 0.0 } else { min_delta_h },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joint(names: &[&str], cards: &[usize], probs: &[f64]) -> DiscreteJoint {
        DiscreteJoint::new(names.iter().map(|s| s.to_string()).collect(), cards.to_vec(), probs.to_vec()).unwrap()
    }

    #[test]
    fn uniform_bit() {
        let j = joint(&["D"], &[2], &[0.5, 0.5]);
        assert!((conditional_entropy(&j, "D", &[]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn copy_variable_removes_uncertainty() {
        // D uniform, e = D
        let j = joint(&["D", "e"], &[2, 2], &[0.5, 0.0, 0.0, 0.5]);
        assert_eq!(conditional_entropy(&j, "D", &["e"]).unwrap(), 0.0);
        let (dh, cmi) = entropy_reduction(&j, &[], "e").unwrap();
        assert!((dh - 1.0).abs() < 1e-12);
        assert!((cmi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_evidence_changes_nothing() {
        // p(D, a, e) = p(D, a) p(e)
        let pda = [0.1, 0.3, 0.4, 0.2];
        let pe = [0.7, 0.3];
        let mut probs = Vec::new();
        for x in pda {
            for y in pe {
                probs.push(x * y);
            }
        }
        let j = joint(&["D", "a", "e"], &[2, 2, 2], &probs);
        let (dh, cmi) = entropy_reduction(&j, &["a"], "e").unwrap();
        assert!(dh.abs() < 1e-12 && cmi.abs() < 1e-12, "{dh} {cmi}");
    }

    #[test]
    fn errors() {
        let j = joint(&["D", "e"], &[2, 2], &[0.25; 4]);
        assert!(matches!(conditional_entropy(&j, "x", &[]), Err(InfoError::UnknownVariable(_))));
        assert!(matches!(conditional_entropy(&j, "D", &["D"]), Err(InfoError::SelfConditioning(_))));
        assert!(matches!(entropy_reduction(&j, &[], "D"), Err(InfoError::NewIsTarget)));
        assert!(matches!(entropy_reduction(&j, &["e"], "e"), Err(InfoError::SelfConditioning(_))));
        assert!(DiscreteJoint::new(vec!["D".into()], vec![2], vec![0.5, 0.6]).is_err());
        assert!(DiscreteJoint::new(vec!["D".into()], vec![3], vec![0.5, 0.5]).is_err());
        assert!(DiscreteJoint::new(vec!["D".into(), "D".into()], vec![1, 1], vec![1.0]).is_err());
    }

    #[test]
    fn uncertainty_never_grows_with_evidence() {
        let mut rng = seeding::stream(5, &[]);
        for _ in 0..50 {
            let j = random_joint(&mut rng, &[3, 2, 2, 2]);
            let h0 = conditional_entropy(&j, "D", &[]).unwrap();
            let h1 = conditional_entropy(&j, "D", &["e1"]).unwrap();
            let h2 = conditional_entropy(&j, "D", &["e1", "e2"]).unwrap();
            let h3 = conditional_entropy(&j, "D", &["e1", "e2", "e3"]).unwrap();
            assert!(h1 <= h0 + 1e-12 && h2 <= h1 + 1e-12 && h3 <= h2 + 1e-12);
        }
    }

    #[test]
    fn demo_summary() {
        let s = demo(1, 50);
        assert_eq!(s.trials, 50);
        assert!(s.max_abs_gap < 1e-9);
        assert!(s.min_delta_h >= -1e-12);
    }
}
