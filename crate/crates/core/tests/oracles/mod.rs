//! Brute-force reference implementations. Deliberately naive: they share no
//! code with the library and favour the textbook definition over speed.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

fn choose2(x: usize) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

/// ARI from counts over every unordered pair of points.
pub fn ari(t: &[usize], p: &[usize]) -> f64 {
    let n = t.len();
    let (mut both, mut same_t, mut same_p) = (0usize, 0usize, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            let st = t[i] == t[j];
            let sp = p[i] == p[j];
            same_t += st as usize;
            same_p += sp as usize;
            both += (st && sp) as usize;
        }
    }
    let pairs = choose2(n);
    let expected = same_t as f64 * same_p as f64 / pairs;
    let max = 0.5 * (same_t + same_p) as f64;
    if max == expected {
        return if same_partition(t, p) { 1.0 } else { 0.0 };
    }
    (both as f64 - expected) / (max - expected)
}

pub fn same_partition(t: &[usize], p: &[usize]) -> bool {
    let n = t.len();
    (0..n).all(|i| (0..n).all(|j| (t[i] == t[j]) == (p[i] == p[j])))
}

fn groups(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut g: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        g.entry(l).or_default().push(i);
    }
    g
}

pub fn entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    groups(labels)
        .values()
        .map(|m| {
            let q = m.len() as f64 / n;
            -q * q.ln()
        })
        .sum()
}

/// `H(a | b)` summed directly over the joint distribution.
pub fn conditional_entropy(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut marg: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *marg.entry(y).or_default() += 1.0;
    }
    joint
        .iter()
        .map(|(&(_, y), &c)| -(c / n) * (c / marg[&y]).ln())
        .sum()
}

pub fn mutual_information(t: &[usize], p: &[usize]) -> f64 {
    entropy(t) - conditional_entropy(t, p)
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|v| (v as f64).ln()).sum()
}

fn table_mi(cells: &[Vec<usize>], rows: &[usize], cols: &[usize], n: usize) -> f64 {
    let nf = n as f64;
    let mut mi = 0.0;
    for (i, row) in cells.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x > 0 {
                let x = x as f64;
                mi += x / nf * (nf * x / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    mi
}

/// Expected MI by enumerating every contingency table with the given
/// marginals and weighting it by its hypergeometric probability.
pub fn emi_by_enumeration(t: &[usize], p: &[usize]) -> f64 {
    let rows: Vec<usize> = groups(t).values().map(Vec::len).collect();
    let cols: Vec<usize> = groups(p).values().map(Vec::len).collect();
    let n = t.len();
    let log_marg: f64 = rows.iter().chain(&cols).map(|&v| ln_factorial(v)).sum::<f64>() - ln_factorial(n);
    let mut cells = vec![vec![0usize; cols.len()]; rows.len()];
    let mut row_left = rows.clone();
    let mut col_left = cols.clone();
    let mut total = 0.0;
    fn rec(
        cell: usize,
        cells: &mut Vec<Vec<usize>>,
        row_left: &mut Vec<usize>,
        col_left: &mut Vec<usize>,
        visit: &mut dyn FnMut(&Vec<Vec<usize>>),
    ) {
        let c = col_left.len();
        if cell == row_left.len() * c {
            if row_left.iter().chain(col_left.iter()).all(|&v| v == 0) {
                visit(cells);
            }
            return;
        }
        let (i, j) = (cell / c, cell % c);
        for x in 0..=row_left[i].min(col_left[j]) {
            row_left[i] -= x;
            col_left[j] -= x;
            cells[i][j] = x;
            rec(cell + 1, cells, row_left, col_left, visit);
            row_left[i] += x;
            col_left[j] += x;
        }
        cells[i][j] = 0;
    }
    rec(0, &mut cells, &mut row_left, &mut col_left, &mut |table| {
        let log_cells: f64 = table.iter().flatten().map(|&x| ln_factorial(x)).sum();
        total += (log_marg - log_cells).exp() * table_mi(table, &rows, &cols, n);
    });
    total
}

pub fn ami(t: &[usize], p: &[usize]) -> f64 {
    if same_partition(t, p) {
        return 1.0;
    }
    let emi = emi_by_enumeration(t, p);
    let den = 0.5 * (entropy(t) + entropy(p)) - emi;
    if den.abs() < 1e-15 {
        return 0.0;
    }
    ((mutual_information(t, p) - emi) / den).clamp(-1.0, 1.0)
}

pub fn homogeneity_completeness_v(t: &[usize], p: &[usize]) -> (f64, f64, f64) {
    let (ht, hp) = (entropy(t), entropy(p));
    let h = if ht == 0.0 { 1.0 } else { 1.0 - conditional_entropy(t, p) / ht };
    let c = if hp == 0.0 { 1.0 } else { 1.0 - conditional_entropy(p, t) / hp };
    let v = if h + c == 0.0 { 0.0 } else { 2.0 * h * c / (h + c) };
    (h, c, v)
}

/// Split and mismerge counts by explicit set intersection: a truth cluster
/// is split when it meets two or more predicted clusters, a predicted
/// cluster is a mismerge when it meets two or more truth clusters.
pub fn split_mismerge(t: &[usize], p: &[usize]) -> (usize, usize, Vec<bool>, Vec<bool>) {
    let tg: Vec<BTreeSet<usize>> = groups(t).into_values().map(|v| v.into_iter().collect()).collect();
    let pg: Vec<BTreeSet<usize>> = groups(p).into_values().map(|v| v.into_iter().collect()).collect();
    let meets = |a: &BTreeSet<usize>, others: &[BTreeSet<usize>]| {
        others.iter().filter(|o| !a.is_disjoint(o)).count()
    };
    let mut split_flags = vec![false; t.len()];
    let mut mismerge_flags = vec![false; t.len()];
    let mut splits = 0;
    for g in &tg {
        if meets(g, &pg) >= 2 {
            splits += 1;
            g.iter().for_each(|&i| split_flags[i] = true);
        }
    }
    let mut mismerges = 0;
    for g in &pg {
        if meets(g, &tg) >= 2 {
            mismerges += 1;
            g.iter().for_each(|&i| mismerge_flags[i] = true);
        }
    }
    (splits, mismerges, split_flags, mismerge_flags)
}

/// Greedy Ward: repeatedly merge the globally closest pair under the full
/// Lance-Williams update. Returns `(members_a, members_b, height)` per merge
/// with heights on the `sqrt(2 * delta SSE)` scale.
pub fn naive_ward(rows: &[f64], n: usize, d: usize) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            dist[i][j] = (0..d).map(|k| (rows[i * d + k] - rows[j * d + k]).powi(2)).sum();
        }
    }
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let mut out = Vec::new();
    for _ in 0..n - 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            for j in i + 1..n {
                if members[i].is_some() && members[j].is_some() && dist[i][j] < best.0 {
                    best = (dist[i][j], i, j);
                }
            }
        }
        let (dij, i, j) = best;
        let ni = members[i].as_ref().unwrap().len() as f64;
        let nj = members[j].as_ref().unwrap().len() as f64;
        for k in 0..n {
            if k == i || k == j || members[k].is_none() {
                continue;
            }
            let nk = members[k].as_ref().unwrap().len() as f64;
            let v = ((ni + nk) * dist[i][k] + (nj + nk) * dist[j][k] - nk * dij) / (ni + nj + nk);
            dist[i][k] = v;
            dist[k][i] = v;
        }
        let mj = members[j].take().unwrap();
        let mi = members[i].clone().unwrap();
        out.push((mi.clone(), mj.clone(), dij.max(0.0).sqrt()));
        members[i].as_mut().unwrap().extend(mj);
    }
    out
}

/// Flat labels from applying every oracle merge with height `<= t`.
pub fn naive_cut(n: usize, merges: &[(Vec<usize>, Vec<usize>, f64)], t: f64) -> Vec<usize> {
    let mut label: Vec<usize> = (0..n).collect();
    for (a, b, h) in merges {
        if *h <= t {
            let (la, lb) = (label[a[0]], label[b[0]]);
            label.iter_mut().filter(|l| **l == lb).for_each(|l| *l = la);
        }
    }
    label
}

/// Exact cosine silhouette over all points, singletons scored 0.
pub fn silhouette(rows: &[f64], d: usize, labels: &[usize]) -> f64 {
    let n = labels.len();
    let cos_dist = |i: usize, j: usize| {
        let (u, v) = (&rows[i * d..(i + 1) * d], &rows[j * d..(j + 1) * d]);
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        1.0 - dot / (nu * nv)
    };
    let g = groups(labels);
    let mut total = 0.0;
    for i in 0..n {
        let own = &g[&labels[i]];
        if own.len() == 1 {
            continue;
        }
        let a = own.iter().filter(|&&j| j != i).map(|&j| cos_dist(i, j)).sum::<f64>() / (own.len() - 1) as f64;
        let b = g
            .iter()
            .filter(|(l, _)| **l != labels[i])
            .map(|(_, m)| m.iter().map(|&j| cos_dist(i, j)).sum::<f64>() / m.len() as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Multiple-negatives ranking loss, written out with plain loops.
/// `weight` is `d_out x d_in` row-major.
pub fn mnrl_loss(
    anchors: &[Vec<f64>],
    positives: &[Vec<f64>],
    weight: &[f64],
    bias: &[f64],
    scale: f64,
    symmetric: bool,
) -> f64 {
    let d_out = bias.len();
    let project = |x: &Vec<f64>| {
        let z: Vec<f64> = (0..d_out)
            .map(|r| bias[r] + x.iter().enumerate().map(|(c, v)| weight[r * x.len() + c] * v).sum::<f64>())
            .collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        z.into_iter().map(|v| v / norm).collect::<Vec<f64>>()
    };
    let fa: Vec<Vec<f64>> = anchors.iter().map(project).collect();
    let fp: Vec<Vec<f64>> = positives.iter().map(project).collect();
    let b = fa.len();
    let score = |i: usize, j: usize| scale * fa[i].iter().zip(&fp[j]).map(|(x, y)| x * y).sum::<f64>();
    let forward: f64 = (0..b)
        .map(|i| {
            let lse = (0..b).map(|j| score(i, j).exp()).sum::<f64>().ln();
            lse - score(i, i)
        })
        .sum::<f64>()
        / b as f64;
    if !symmetric {
        return forward;
    }
    let backward: f64 = (0..b)
        .map(|j| {
            let lse = (0..b).map(|i| score(i, j).exp()).sum::<f64>().ln();
            lse - score(j, j)
        })
        .sum::<f64>()
        / b as f64;
    0.5 * (forward + backward)
}

/// Canonical form of a labeling: each label replaced by its first index.
pub fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| *first.entry(l).or_insert(i))
        .collect()
}
