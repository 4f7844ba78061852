//! Independent oracles shared by the oracle tests and the acceptance suite.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solarcast::embedding::{pair_gradient, pair_loss, AliasTable};
use solarcast::forest::{fit_tree, TreeNode, TreeParams};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Exhaustive CART: every feature, every midpoint between distinct values,
/// child SSE computed directly with two-pass means.
#[allow(clippy::needless_range_loop)]
pub fn brute_tree(x: &[Vec<f64>], y: &[f64], rows: &[usize], params: &TreeParams, depth: usize) -> TreeNode {
    let n = rows.len();
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
    let constant = rows.iter().all(|&r| y[r] == y[rows[0]]);
    if params.max_depth.is_some_and(|d| depth >= d) || n < 2 * params.min_leaf || constant {
        return TreeNode::Leaf { prediction: mean, count: n };
    }
    let sse = |idx: &[usize]| {
        let m = idx.iter().map(|&r| y[r]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&r| (y[r] - m).powi(2)).sum::<f64>()
    };
    let p = x[0].len();
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..p {
        let mut vals: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = w[0] + (w[1] - w[0]) / 2.0;
            let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| x[r][f] <= thr);
            if left.len() < params.min_leaf || right.len() < params.min_leaf {
                continue;
            }
            let child = sse(&left) + sse(&right);
            if best.is_none_or(|(b, _, _)| child < b - 1e-9 * b.max(1.0)) {
                best = Some((child, f, thr));
            }
        }
    }
    match best {
        None => TreeNode::Leaf { prediction: mean, count: n },
        Some((_, feature, threshold)) => {
            let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| x[r][feature] <= threshold);
            TreeNode::Internal {
                feature,
                threshold,
                left: Box::new(brute_tree(x, y, &left, params, depth + 1)),
                right: Box::new(brute_tree(x, y, &right, params, depth + 1)),
            }
        }
    }
}

/// First structural difference between two trees, if any. Thresholds and
/// features must match exactly; leaf means within 1e-9 relative.
pub fn tree_diff(a: &TreeNode, b: &TreeNode, path: &str) -> Option<String> {
    match (a, b) {
        (
            TreeNode::Internal { feature: fa, threshold: ta, left: la, right: ra },
            TreeNode::Internal { feature: fb, threshold: tb, left: lb, right: rb },
        ) => {
            if fa != fb || ta != tb {
                return Some(format!("{path}: split ({fa}, {ta}) vs ({fb}, {tb})"));
            }
            tree_diff(la, lb, &format!("{path}L")).or_else(|| tree_diff(ra, rb, &format!("{path}R")))
        }
        (TreeNode::Leaf { prediction: pa, count: ca }, TreeNode::Leaf { prediction: pb, count: cb }) => {
            let close = (pa - pb).abs() <= 1e-9 * pa.abs().max(1.0);
            (ca != cb || !close).then(|| format!("{path}: leaf ({pa}, {ca}) vs ({pb}, {cb})"))
        }
        _ => Some(format!("{path}: node kinds differ")),
    }
}

/// Fits `datasets` random 50-row problems with the library and the brute
/// force; returns the mismatch descriptions.
pub fn cart_oracle_mismatches(datasets: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    for d in 0..datasets {
        let p = 4;
        // Quarter-step grids give many ties; the last column is continuous.
        let x: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let mut row: Vec<f64> = (0..p - 1).map(|_| rng.gen_range(0..12) as f64 / 4.0).collect();
                row.push(rng.gen::<f64>());
                row
            })
            .collect();
        let y: Vec<f64> = if d % 2 == 0 {
            (0..50).map(|_| rng.gen_range(0..10) as f64).collect()
        } else {
            x.iter().map(|r| r[0] * 2.0 - r[3] + rng.gen::<f64>()).collect()
        };
        let params = TreeParams { mtry: None, min_leaf: 1 + (d % 3) * 2, max_depth: (d % 4 == 3).then_some(3) };
        let flat: Vec<f64> = x.iter().flatten().copied().collect();
        let tree = fit_tree(&flat, p, &y, &params, &mut ChaCha8Rng::seed_from_u64(d as u64)).unwrap();
        let rows: Vec<usize> = (0..50).collect();
        let oracle = brute_tree(&x, &y, &rows, &params, 0);
        if let Some(diff) = tree_diff(&tree, &oracle, "root") {
            out.push(format!("dataset {d}: {diff}"));
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest relative error between the analytic SkipGram gradient and central
/// finite differences (step `h`) over `pairs` random (center, context,
/// negatives) draws.
pub fn skipgram_fd_max_rel_error(pairs: usize, h: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let dims = 8;
    let k = 5;
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let mut vecs: Vec<Vec<f64>> =
            (0..k + 2).map(|_| (0..dims).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let loss = |v: &[Vec<f64>]| {
            let negs: Vec<&[f64]> = v[2..].iter().map(Vec::as_slice).collect();
            pair_loss(&v[0], &v[1], &negs)
        };
        let negs: Vec<&[f64]> = vecs[2..].iter().map(Vec::as_slice).collect();
        let g = pair_gradient(&vecs[0], &vecs[1], &negs);
        let analytic: Vec<Vec<f64>> =
            std::iter::once(g.center).chain(std::iter::once(g.context)).chain(g.negatives).collect();
        for (which, a) in analytic.iter().enumerate() {
            let mut numeric = vec![0.0; dims];
            for j in 0..dims {
                let orig = vecs[which][j];
                vecs[which][j] = orig + h;
                let up = loss(&vecs);
                vecs[which][j] = orig - h;
                let down = loss(&vecs);
                vecs[which][j] = orig;
                numeric[j] = (up - down) / (2.0 * h);
            }
            let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
            let scale = norm(a).max(norm(&numeric)).max(1e-8);
            worst = worst.max(norm(&diff) / scale);
        }
    }
    worst
}

/// Chi-square goodness-of-fit p-values of the alias sampler against the
/// normalised weights, one per random weight vector.
pub fn alias_chi_square_p_values(vectors: usize, draws: usize) -> Vec<f64> {
    let seed = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..vectors)
        .map(|v| {
            let k = rng.gen_range(2..=30);
            let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..10.0)).collect();
            let table = AliasTable::new(&weights).unwrap();
            let mut counts = vec![0u64; k];
            let mut draw_rng = ChaCha8Rng::seed_from_u64(seed * 1000 + v as u64);
            for _ in 0..draws {
                counts[table.sample(&mut draw_rng)] += 1;
            }
            let total: f64 = weights.iter().sum();
            let stat: f64 = counts
                .iter()
                .zip(&weights)
                .map(|(&c, w)| {
                    let e = draws as f64 * w / total;
                    (c as f64 - e).powi(2) / e
                })
                .sum();
            ChiSquared::new((k - 1) as f64).unwrap().sf(stat)
        })
        .collect()
}
