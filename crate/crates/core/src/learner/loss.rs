//! Losses and their exact gradients.
//!
//! Every `*_grad` function returns the loss value together with its gradient
//! with respect to the function's input (logits or unit-norm embeddings).

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits.iter().copied());
    logits.iter().map(|&z| (z - lse).exp()).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-log softmax(logits)[label]`, computed via log-sum-exp.
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits.iter().copied()) - logits[label]
}

pub fn cross_entropy_grad(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    (cross_entropy_loss(logits, label), grad)
}

/// Mean over labels of the per-label sigmoid cross-entropy.
pub fn bce_loss(logits: &[f64], targets: &[bool]) -> f64 {
    assert_eq!(logits.len(), targets.len(), "one target per logit");
    let total: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&x, &y)| {
            let y = if y { 1.0 } else { 0.0 };
            x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
        })
        .sum();
    total / logits.len() as f64
}

pub fn bce_grad(logits: &[f64], targets: &[bool]) -> (f64, Vec<f64>) {
    let n = logits.len() as f64;
    let grad = logits
        .iter()
        .zip(targets)
        .map(|(&x, &y)| (sigmoid(x) - if y { 1.0 } else { 0.0 }) / n)
        .collect();
    (bce_loss(logits, targets), grad)
}

fn check_embeddings(embeddings: &ArrayView2<f64>, n_labels: usize) -> Result<()> {
    let n = embeddings.nrows();
    if n < 2 {
        return Err(Error::Contract(format!(
            "contrastive loss needs at least 2 samples, got {n}"
        )));
    }
    if n_labels != n {
        return Err(Error::Shape {
            expected: n,
            got: n_labels,
        });
    }
    for (i, row) in embeddings.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::Contract(format!(
                "embedding {i} is not unit-norm (norm {norm})"
            )));
        }
    }
    Ok(())
}

/// Shared core of both contrastive losses: each anchor `i` has weighted
/// positives `(p, w)`; its term is `-1/|P(i)| * sum_p w * log q_ip` where
/// `q_i.` is the softmax of `z_i . z_a / tau` over all `a != i`.
fn weighted_contrastive(
    z: &ArrayView2<f64>,
    tau: f64,
    positives: impl Fn(usize) -> Vec<(usize, f64)>,
) -> (f64, Array2<f64>) {
    let n = z.nrows();
    let sim = z.dot(&z.t()) / tau;
    let mut loss = 0.0;
    let mut grad = Array2::<f64>::zeros(z.raw_dim());
    for i in 0..n {
        let pos = positives(i);
        if pos.is_empty() {
            continue;
        }
        let others = (0..n).filter(|&a| a != i);
        let lse = log_sum_exp(others.clone().map(|a| sim[[i, a]]));
        let count = pos.len() as f64;
        let weight_sum: f64 = pos.iter().map(|(_, w)| w).sum();
        for &(p, w) in &pos {
            loss -= w * (sim[[i, p]] - lse) / count;
        }
        // d/dz of the positive terms
        for &(p, w) in &pos {
            let scale = -w / (count * tau);
            let zp = z.row(p).to_owned();
            let zi = z.row(i).to_owned();
            grad.row_mut(i).scaled_add(scale, &zp);
            grad.row_mut(p).scaled_add(scale, &zi);
        }
        // d/dz of the log-sum-exp, weighted by the total positive weight
        let coeff = weight_sum / (count * tau);
        if coeff != 0.0 {
            let zi = z.row(i).to_owned();
            for a in others {
                let q = (sim[[i, a]] - lse).exp();
                let za = z.row(a).to_owned();
                grad.row_mut(i).scaled_add(coeff * q, &za);
                grad.row_mut(a).scaled_add(coeff * q, &zi);
            }
        }
    }
    (loss, grad)
}

/// Supervised contrastive loss, summed over anchors. Anchors without any
/// positive contribute zero.
pub fn supcon_loss(embeddings: ArrayView2<f64>, labels: &[usize], tau: f64) -> Result<f64> {
    supcon_grad(embeddings, labels, tau).map(|(loss, _)| loss)
}

pub fn supcon_grad(
    embeddings: ArrayView2<f64>,
    labels: &[usize],
    tau: f64,
) -> Result<(f64, Array2<f64>)> {
    check_tau(tau)?;
    check_embeddings(&embeddings, labels.len())?;
    Ok(weighted_contrastive(&embeddings, tau, |i| {
        (0..labels.len())
            .filter(|&p| p != i && labels[p] == labels[i])
            .map(|p| (p, 1.0))
            .collect()
    }))
}

/// Jaccard index of two label sets; 1 for two empty sets.
pub fn assimilation(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Multi-label supervised contrastive loss: positives are the other samples
/// whose label-set similarity reaches `threshold`, each weighted by it.
pub fn multisupcon_loss(
    embeddings: ArrayView2<f64>,
    label_sets: &[BTreeSet<usize>],
    tau: f64,
    threshold: f64,
) -> Result<f64> {
    multisupcon_grad(embeddings, label_sets, tau, threshold).map(|(loss, _)| loss)
}

pub fn multisupcon_grad(
    embeddings: ArrayView2<f64>,
    label_sets: &[BTreeSet<usize>],
    tau: f64,
    threshold: f64,
) -> Result<(f64, Array2<f64>)> {
    check_tau(tau)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Contract(format!(
            "positive threshold must lie in [0, 1], got {threshold}"
        )));
    }
    if label_sets.iter().any(BTreeSet::is_empty) {
        return Err(Error::Contract("label sets must be non-empty".to_string()));
    }
    check_embeddings(&embeddings, label_sets.len())?;
    Ok(weighted_contrastive(&embeddings, tau, |i| {
        (0..label_sets.len())
            .filter(|&p| p != i)
            .map(|p| (p, assimilation(&label_sets[i], &label_sets[p])))
            .filter(|&(_, s)| s >= threshold)
            .collect()
    }))
}

/// `lambda * contrastive + (1 - lambda) * supervised`.
pub fn joint_loss(lambda: f64, contrastive: f64, supervised: f64) -> f64 {
    lambda * contrastive + (1.0 - lambda) * supervised
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Contract(format!("temperature must be positive, got {tau}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    // Straight-from-the-formula oracle, deliberately naive.
    fn naive_supcon(z: &[Vec<f64>], weights: &dyn Fn(usize, usize) -> Option<f64>, tau: f64) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let n = z.len();
        let mut total = 0.0;
        for i in 0..n {
            let pos: Vec<(usize, f64)> = (0..n)
                .filter(|&p| p != i)
                .filter_map(|p| weights(i, p).map(|w| (p, w)))
                .collect();
            if pos.is_empty() {
                continue;
            }
            let denom: f64 = (0..n).filter(|&a| a != i).map(|a| (dot(&z[i], &z[a]) / tau).exp()).sum();
            let mut inner = 0.0;
            for (p, w) in &pos {
                inner += w * ((dot(&z[i], &z[*p]) / tau).exp() / denom).ln();
            }
            total += -inner / pos.len() as f64;
        }
        total
    }

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn to_array(z: &[Vec<f64>]) -> Array2<f64> {
        Array2::from_shape_fn((z.len(), z[0].len()), |(i, j)| z[i][j])
    }

    #[test]
    fn cross_entropy_values() {
        assert!(close(cross_entropy_loss(&[0.0, 0.0], 0), std::f64::consts::LN_2, 1e-12));
        let big = cross_entropy_loss(&[1000.0, 0.0], 0);
        assert!(big.is_finite() && big < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..5).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let label = rng.gen_range(0..5);
            let naive = -(logits[label].exp() / logits.iter().map(|z| z.exp()).sum::<f64>()).ln();
            assert!(close(cross_entropy_loss(&logits, label), naive, 1e-8));
        }
    }

    #[test]
    fn bce_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!(close(bce_loss(&[0.0, 0.0, 0.0], &[true, false, true]), ln2, 1e-12));
        assert!(bce_loss(&[50.0, -50.0], &[true, false]) < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mask: Vec<bool> = (0..4).map(|_| rng.gen_bool(0.5)).collect();
            let naive: f64 = logits
                .iter()
                .zip(&mask)
                .map(|(&x, &y)| {
                    let s = 1.0 / (1.0 + (-x).exp());
                    if y { -s.ln() } else { -(1.0 - s).ln() }
                })
                .sum::<f64>()
                / 4.0;
            assert!(close(bce_loss(&logits, &mask), naive, 1e-8));
            // negate logits and complement the mask
            let neg: Vec<f64> = logits.iter().map(|x| -x).collect();
            let comp: Vec<bool> = mask.iter().map(|y| !y).collect();
            assert!(close(bce_loss(&neg, &comp), bce_loss(&logits, &mask), 1e-12));
        }
    }

    #[test]
    fn supcon_two_sample_zero_cases() {
        for tau in [0.1, 0.5, 1.0] {
            let z = array![[0.6, 0.8], [0.6, 0.8]];
            assert!(close(supcon_loss(z.view(), &[3, 3], tau).unwrap(), 0.0, 1e-12));
            let z = array![[1.0, 0.0], [0.0, 1.0]];
            assert_eq!(supcon_loss(z.view(), &[0, 1], tau).unwrap(), 0.0);
        }
    }

    #[test]
    fn supcon_four_orthogonal_matches_oracle() {
        let z = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ];
        let labels = [0, 0, 1, 1];
        let oracle = naive_supcon(&z, &|i, p| (labels[i] == labels[p]).then_some(1.0), 0.1);
        // every similarity is zero, so each anchor has q = 1/3: 4 * ln 3
        assert!(close(oracle, 4.0 * 3f64.ln(), 1e-12));
        let got = supcon_loss(to_array(&z).view(), &labels, 0.1).unwrap();
        assert!(close(got, oracle, 1e-8));
    }

    #[test]
    fn supcon_random_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let z: Vec<Vec<f64>> = (0..6)
                .map(|_| unit((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                .collect();
            let labels: Vec<usize> = (0..6).map(|_| rng.gen_range(0..3)).collect();
            let oracle = naive_supcon(&z, &|i, p| (labels[i] == labels[p]).then_some(1.0), 0.3);
            let got = supcon_loss(to_array(&z).view(), &labels, 0.3).unwrap();
            assert!(close(got, oracle, 1e-8), "{got} vs {oracle}");
        }
    }

    #[test]
    fn supcon_contracts() {
        let z = array![[1.0, 0.0]];
        assert!(supcon_loss(z.view(), &[0], 0.1).is_err());
        let z = array![[2.0, 0.0], [1.0, 0.0]];
        assert!(matches!(supcon_loss(z.view(), &[0, 0], 0.1), Err(Error::Contract(_))));
    }

    #[test]
    fn multisupcon_cases() {
        let set = |xs: &[usize]| xs.iter().copied().collect::<BTreeSet<_>>();
        let z = array![[0.0, 1.0], [0.0, 1.0]];
        assert!(close(
            multisupcon_loss(z.view(), &[set(&[1, 2]), set(&[1, 2])], 0.1, 0.5).unwrap(),
            0.0,
            1e-12
        ));
        assert_eq!(
            multisupcon_loss(z.view(), &[set(&[1]), set(&[2])], 0.1, 0.2).unwrap(),
            0.0
        );

        let z = vec![
            unit(vec![1.0, 0.2, 0.0]),
            unit(vec![0.3, 1.0, 0.1]),
            unit(vec![0.0, 0.4, 1.0]),
            unit(vec![0.7, 0.0, 0.7]),
        ];
        let sets = [set(&[0, 1]), set(&[1]), set(&[1, 2]), set(&[0, 1, 2])];
        let c = 0.3;
        let oracle = naive_supcon(
            &z,
            &|i, p| {
                let s = assimilation(&sets[i], &sets[p]);
                (s >= c).then_some(s)
            },
            0.1,
        );
        let got = multisupcon_loss(to_array(&z).view(), &sets, 0.1, c).unwrap();
        assert!(close(got, oracle, 1e-8), "{got} vs {oracle}");
    }

    #[test]
    fn multisupcon_singletons_reduce_to_supcon() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z: Vec<Vec<f64>> = (0..5)
            .map(|_| unit((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let sets: Vec<BTreeSet<usize>> = (0..5).map(|_| [0].into_iter().collect()).collect();
        let a = multisupcon_loss(to_array(&z).view(), &sets, 0.1, 0.5).unwrap();
        let b = supcon_loss(to_array(&z).view(), &[0; 5], 0.1).unwrap();
        assert!(close(a, b, 1e-12));
    }

    #[test]
    fn joint_endpoints() {
        assert_eq!(joint_loss(0.0, 3.0, 2.0), 2.0);
        assert_eq!(joint_loss(1.0, 3.0, 2.0), 3.0);
        assert!(close(joint_loss(0.1, 3.0, 2.0), 0.3 + 1.8, 1e-12));
    }
}
