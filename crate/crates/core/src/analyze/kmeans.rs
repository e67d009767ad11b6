use std::fmt::Write as _;

use log::{debug, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::spectra::Class;

pub const ELBOW_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
}

impl ClusterResult {
    pub fn centroid_csv(&self) -> String {
        let mut s = String::new();
        for (c, row) in self.centroids.iter().enumerate() {
            let _ = write!(s, "{c}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut n = vec![0; self.k];
        for &a in &self.assignments {
            n[a] += 1;
        }
        n
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_points(data: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = data
        .iter()
        .map(|p| p.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn assign(data: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assignments = data
        .iter()
        .map(|p| {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, m)| (c, sq_dist(p, m)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            inertia += d;
            best
        })
        .collect();
    (assignments, inertia)
}

fn sample_d2<R: Rng + ?Sized>(d2: &[f64], total: f64, rng: &mut R) -> usize {
    let mut u = rng.random::<f64>() * total;
    let mut chosen = d2.len() - 1;
    for (i, &w) in d2.iter().enumerate() {
        if u < w {
            chosen = i;
            break;
        }
        u -= w;
    }
    // guard against rounding landing on a zero-weight point
    if d2[chosen] == 0.0 {
        chosen = d2.iter().position(|&w| w > 0.0).expect("positive mass");
    }
    chosen
}

/// Greedy k-means++: each new centre is the best of 2 + ln k D²-sampled
/// candidates by resulting potential.
fn plus_plus_init<R: Rng + ?Sized>(data: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let trials = 2 + (k as f64).ln() as usize;
    let mut centroids = vec![data[rng.random_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            centroids.push(data[rng.random_range(0..data.len())].clone());
            continue;
        }
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let i = sample_d2(&d2, total, rng);
            let next: Vec<f64> = d2.iter().zip(data).map(|(w, p)| w.min(sq_dist(p, &data[i]))).collect();
            let pot: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| pot < b.0) {
                best = Some((pot, i, next));
            }
        }
        let (_, i, next) = best.expect("at least one trial");
        d2 = next;
        centroids.push(data[i].clone());
    }
    centroids
}

fn update_centroids(data: &[Vec<f64>], assignments: &[usize], old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = old.len();
    let dim = data[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in data.iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    let mut taken = vec![false; data.len()];
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            sums[c].iter_mut().for_each(|s| *s /= n);
            continue;
        }
        let far = (0..data.len())
            .filter(|&i| !taken[i])
            .map(|i| (i, sq_dist(&data[i], &old[assignments[i]])))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
            .0;
        warn!("cluster {c} emptied; re-seeding at point {far}");
        taken[far] = true;
        sums[c] = data[far].clone();
    }
    sums
}

/// Hartigan single-point moves from a Lloyd fixed point. A point leaves its
/// cluster when the inertia it adds elsewhere, n_b/(n_b+1)·d², is below what
/// it costs where it sits, n_a/(n_a-1)·d². Every move lowers inertia, so this
/// only escapes Lloyd-stable local optima and never undoes convergence.
fn hartigan_refine(data: &[Vec<f64>], assignments: &mut [usize], centroids: &mut [Vec<f64>]) -> usize {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    let mut moves = 0;
    // bounded; each move strictly lowers inertia so cycling cannot occur
    for _ in 0..100 {
        let mut moved = false;
        for (i, p) in data.iter().enumerate() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let na = counts[a] as f64;
            let leave = na / (na - 1.0) * sq_dist(p, &centroids[a]);
            let (b, join) = (0..k)
                .filter(|&b| b != a)
                .map(|b| {
                    let nb = counts[b] as f64;
                    (b, nb / (nb + 1.0) * sq_dist(p, &centroids[b]))
                })
                .fold((a, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            if join >= leave * (1.0 - 1e-12) {
                continue;
            }
            let nb = counts[b] as f64;
            for (j, v) in p.iter().enumerate() {
                centroids[a][j] = (centroids[a][j] * na - v) / (na - 1.0);
                centroids[b][j] = (centroids[b][j] * nb + v) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            assignments[i] = b;
            moved = true;
            moves += 1;
        }
        if !moved {
            break;
        }
    }
    moves
}

/// Lloyd's algorithm from a k-means++ start, then Hartigan refinement with
/// Lloyd re-run until neither changes anything.
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<ClusterResult> {
    if data.is_empty() {
        return Err(Error::argument("no points to cluster"));
    }
    let dim = data[0].len();
    if data.iter().any(|p| p.len() != dim) {
        return Err(Error::shape("points differ in dimension"));
    }
    let distinct = distinct_points(data);
    if k == 0 || k > distinct {
        return Err(Error::argument(format!("k = {k} but only {distinct} distinct points")));
    }
    let mut rng = rng::stream(seed, "kmeans", 0);
    let mut centroids = plus_plus_init(data, k, &mut rng);
    let (mut assignments, mut inertia) = assign(data, &centroids);
    let mut iterations = 0;
    loop {
        lloyd(
            data,
            &mut centroids,
            &mut assignments,
            &mut inertia,
            &mut iterations,
            max_iter,
            tol,
        );
        let mut refined = assignments.clone();
        if hartigan_refine(data, &mut refined, &mut centroids) == 0 {
            break;
        }
        // recompute exactly rather than trusting the incremental centroids
        centroids = update_centroids(data, &refined, &centroids);
        let refined_inertia: f64 = data.iter().zip(&refined).map(|(p, &c)| sq_dist(p, &centroids[c])).sum();
        assert!(
            refined_inertia <= inertia + 1e-9 * inertia.max(1.0),
            "k-means inertia rose from {inertia} to {refined_inertia} in refinement"
        );
        assignments = refined;
        inertia = refined_inertia;
    }
    debug!("k-means k={k}: inertia {inertia} after {iterations} iterations");
    Ok(ClusterResult {
        k,
        assignments,
        centroids,
        inertia,
        iterations,
    })
}

fn lloyd(
    data: &[Vec<f64>],
    centroids: &mut Vec<Vec<f64>>,
    assignments: &mut Vec<usize>,
    inertia: &mut f64,
    iterations: &mut usize,
    max_iter: usize,
    tol: f64,
) {
    for _ in 0..max_iter {
        let it = *iterations + 1;
        let next = update_centroids(data, assignments, centroids);
        let movement = next
            .iter()
            .zip(centroids.iter())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        let (next_assign, next_inertia) = assign(data, &next);
        assert!(
            next_inertia <= *inertia + 1e-9 * inertia.max(1.0),
            "k-means inertia rose from {inertia} to {next_inertia} at iteration {it}"
        );
        let changed = next_assign != *assignments;
        *centroids = next;
        *assignments = next_assign;
        *inertia = next_inertia;
        *iterations = it;
        if !changed || movement < tol {
            break;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowPoint {
    pub k: usize,
    /// Best inertia over the restarts.
    pub inertia: f64,
    /// Running minimum over increasing k.
    pub inertia_monotone: f64,
}

pub fn elbow_scan(data: &[Vec<f64>], ks: &[usize], seed: u64, restarts: usize) -> Result<Vec<ElbowPoint>> {
    if ks.is_empty() {
        return Err(Error::argument("empty k range"));
    }
    let mut sorted = ks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out: Vec<ElbowPoint> = Vec::with_capacity(sorted.len());
    for k in sorted {
        let mut best = f64::INFINITY;
        for r in 0..restarts.max(1) {
            let res = kmeans(
                data,
                k,
                rng::derive_seed(seed, "elbow", (k * 1000 + r) as u64),
                300,
                0.0,
            )?;
            best = best.min(res.inertia);
        }
        let mono = out.last().map_or(best, |p| p.inertia_monotone.min(best));
        out.push(ElbowPoint {
            k,
            inertia: best,
            inertia_monotone: mono,
        });
    }
    Ok(out)
}

/// Per-cluster share of each class, as a percentage of that class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crosstab {
    /// `percent[c][class]`; `None` when the class has no members.
    pub percent: Vec<[Option<f64>; 2]>,
}

impl Crosstab {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cluster,healthy_pct,tumor_pct\n");
        for (c, row) in self.percent.iter().enumerate() {
            let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
            let _ = writeln!(s, "{c},{},{}", cell(row[0]), cell(row[1]));
        }
        s
    }
}

pub fn crosstab(assignments: &[usize], labels: &[Class], k: usize) -> Result<Crosstab> {
    if assignments.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} assignments but {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    if let Some(&a) = assignments.iter().find(|&&a| a >= k) {
        return Err(Error::argument(format!("assignment {a} out of range for k = {k}")));
    }
    let mut counts = vec![[0usize; 2]; k];
    let mut totals = [0usize; 2];
    for (&a, l) in assignments.iter().zip(labels) {
        counts[a][l.index()] += 1;
        totals[l.index()] += 1;
    }
    let percent = counts
        .iter()
        .map(|row| {
            let cell = |j: usize| (totals[j] > 0).then(|| 100.0 * row[j] as f64 / totals[j] as f64);
            [cell(0), cell(1)]
        })
        .collect();
    Ok(Crosstab { percent })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub cluster: usize,
    pub size: usize,
    pub mean: Vec<f64>,
    /// Population standard deviation per coordinate.
    pub std: Vec<f64>,
}

pub fn cluster_profiles(data: &[Vec<f64>], result: &ClusterResult) -> Result<Vec<ClusterProfile>> {
    if data.len() != result.assignments.len() {
        return Err(Error::shape("data and assignments differ in length"));
    }
    let mut out = Vec::with_capacity(result.k);
    for c in 0..result.k {
        let members: Vec<&Vec<f64>> = data
            .iter()
            .zip(&result.assignments)
            .filter(|(_, &a)| a == c)
            .map(|(p, _)| p)
            .collect();
        let dim = result.centroids[c].len();
        if members.is_empty() {
            out.push(ClusterProfile {
                cluster: c,
                size: 0,
                mean: result.centroids[c].clone(),
                std: vec![0.0; dim],
            });
            continue;
        }
        let n = members.len() as f64;
        let mut mean = vec![0.0; dim];
        for p in &members {
            for (m, v) in mean.iter_mut().zip(p.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for p in &members {
            for ((s, v), m) in var.iter_mut().zip(p.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        out.push(ClusterProfile {
            cluster: c,
            size: members.len(),
            mean,
            std,
        });
    }
    Ok(out)
}
