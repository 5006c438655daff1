use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convex weights `r[g][l]` over variates, one simplex per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationWeights {
    pub r: Vec<Vec<f64>>,
}

impl CombinationWeights {
    pub fn uniform(n_groups: usize, n_variates: usize) -> Self {
        Self {
            r: vec![vec![1.0 / n_variates as f64; n_variates]; n_groups],
        }
    }

    pub fn n_groups(&self) -> usize {
        self.r.len()
    }

    pub fn n_variates(&self) -> usize {
        self.r.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub iterations: usize,
    pub step: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            step: 0.5,
        }
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    // absorb rounding so the entries sum to one
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
    w
}

fn mean_margin(r: &[Vec<f64>], samples: &[&[Vec<f64>]], labels: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let n_groups = r.len();
    let n_var = r[0].len();
    let comb = |s: &[Vec<f64>], g: usize| -> f64 { (0..n_var).map(|l| r[g][l] * s[l][g]).sum() };
    let mut total = 0.0;
    let mut grad = vec![vec![0.0; n_var]; n_groups];
    let n = samples.len() as f64;
    for (s, &y) in samples.iter().zip(labels) {
        let mut rival = None;
        let mut best = f64::NEG_INFINITY;
        for h in (0..n_groups).filter(|&h| h != y) {
            let c = comb(s, h);
            if c > best {
                best = c;
                rival = Some(h);
            }
        }
        let h = rival.expect("at least two groups");
        total += comb(s, y) - best;
        for l in 0..n_var {
            grad[y][l] += s[l][y] / n;
            grad[h][l] -= s[l][h] / n;
        }
    }
    (total / n, grad)
}

/// Maximize the mean margin `S^comb_{y_k,k} − max_{h≠y_k} S^comb_{h,k}` over
/// the product of simplices by projected supergradient ascent. `samples[k]`
/// holds the normalized scores `[l][g]` of unit `k`. Returns the best iterate.
pub fn train_weights(
    samples: &[&[Vec<f64>]],
    labels: &[usize],
    n_groups: usize,
    cfg: &WeightConfig,
) -> Result<CombinationWeights> {
    if n_groups < 2 {
        return Err(Error::contract("weight training needs at least two groups"));
    }
    if samples.len() != labels.len() || samples.is_empty() {
        return Err(Error::contract("weight training needs one label per sample"));
    }
    let n_var = samples[0].len();
    if n_var == 0 || samples.iter().any(|s| s.len() != n_var || s.iter().any(|v| v.len() != n_groups)) {
        return Err(Error::contract("score arrays have inconsistent shapes"));
    }
    for g in 0..n_groups {
        if !labels.contains(&g) {
            return Err(Error::contract(format!("no training sample for group {g}")));
        }
    }
    if labels.iter().any(|&y| y >= n_groups) {
        return Err(Error::contract("label out of range"));
    }

    let mut r = CombinationWeights::uniform(n_groups, n_var).r;
    if n_var == 1 {
        return Ok(CombinationWeights { r });
    }
    let (mut best_val, mut grad) = mean_margin(&r, samples, labels);
    let mut best = r.clone();
    for it in 1..=cfg.iterations {
        let eta = cfg.step / (it as f64).sqrt();
        for g in 0..n_groups {
            let stepped: Vec<f64> = r[g].iter().zip(&grad[g]).map(|(w, d)| w + eta * d).collect();
            r[g] = project_simplex(&stepped);
        }
        let (val, gr) = mean_margin(&r, samples, labels);
        grad = gr;
        if val > best_val {
            best_val = val;
            best = r.clone();
        }
    }
    Ok(CombinationWeights { r: best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_properties() {
        let p = project_simplex(&[0.2, 0.3, 0.5]);
        assert!(p.iter().zip([0.2, 0.3, 0.5]).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(project_simplex(&[5.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[1.0, 1.0, -3.0]);
        assert_eq!(p, vec![0.5, 0.5, 0.0]);
        let p = project_simplex(&[-1.0, 2.5, 0.1, 0.7]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn single_variate_forced_to_one() {
        let s = [vec![vec![0.7, 0.3]], vec![vec![0.2, 0.8]]];
        let refs: Vec<&[Vec<f64>]> = s.iter().map(|v| v.as_slice()).collect();
        let w = train_weights(&refs, &[0, 1], 2, &WeightConfig::default()).unwrap();
        assert_eq!(w.r, vec![vec![1.0], vec![1.0]]);
    }

    #[test]
    fn separating_variate_wins() {
        // variate 0 separates, variate 1 is a fixed pseudo-random distraction
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for k in 0..40 {
            let y = k % 2;
            let sep = if y == 0 { vec![0.85, 0.15] } else { vec![0.2, 0.8] };
            let u = ((k * 37 + 11) % 17) as f64 / 16.0;
            samples.push(vec![sep, vec![u, 1.0 - u]]);
            labels.push(y);
        }
        let refs: Vec<&[Vec<f64>]> = samples.iter().map(|v| v.as_slice()).collect();
        let w = train_weights(&refs, &labels, 2, &WeightConfig::default()).unwrap();
        for g in 0..2 {
            assert!(w.r[g][0] >= 0.9, "{:?}", w.r);
            assert!((w.r[g].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let again = train_weights(&refs, &labels, 2, &WeightConfig::default()).unwrap();
        assert_eq!(w, again);
    }

    #[test]
    fn rejects_missing_group() {
        let s = [vec![vec![0.7, 0.3]]];
        let refs: Vec<&[Vec<f64>]> = s.iter().map(|v| v.as_slice()).collect();
        assert!(train_weights(&refs, &[0], 2, &WeightConfig::default()).is_err());
    }
}
