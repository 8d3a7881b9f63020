//! k-means clustering of embedding vectors into categorical cluster IDs.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{io, Error, Result};

pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
    pub layer: i64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            layer: 0,
        }
    }
}

/// Fitted centroids for one encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub layer: i64,
    pub seed: u64,
    pub inertia: f64,
    dim: usize,
    centroids: Vec<f64>,
}

/// A fitted model plus the inertia observed after every assignment step.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub model: ClusterModel,
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl ClusterModel {
    pub fn from_centroids(centroids: Vec<Vec<f64>>, layer: i64, seed: u64) -> Result<Self> {
        let dim = centroids.first().map_or(0, Vec::len);
        if centroids.is_empty() || dim == 0 {
            return Err(Error::Invalid("cluster model needs k >= 1 centroids of positive dimension".into()));
        }
        if centroids.iter().any(|c| c.len() != dim) {
            return Err(Error::Invalid("centroids differ in dimension".into()));
        }
        Ok(Self {
            layer,
            seed,
            inertia: 0.0,
            dim,
            centroids: centroids.concat(),
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centroids(&self) -> impl Iterator<Item = &[f64]> {
        self.centroids.chunks_exact(self.dim)
    }

    /// Nearest centroid under squared Euclidean distance; ties go to the
    /// lowest index.
    pub fn assign(&self, vector: &[f64]) -> Result<usize> {
        if vector.len() != self.dim {
            return Err(Error::Invalid(format!(
                "vector has dimension {}, model expects {}",
                vector.len(),
                self.dim
            )));
        }
        Ok(self.nearest(vector).0)
    }

    fn nearest(&self, vector: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centroids().enumerate() {
            let d = sq_dist(vector, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    pub fn write<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "#KMEANS k={} dim={} layer={} seed={} inertia={}",
            self.k(),
            self.dim,
            self.layer,
            self.seed,
            self.inertia
        )
        .map_err(io::write_err)?;
        for c in self.centroids() {
            let row: Vec<String> = c.iter().map(f64::to_string).collect();
            writeln!(out, "{}", row.join(" ")).map_err(io::write_err)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, |out| self.write(out))
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty k-means model".into()))?
            .map_err(|e| Error::io("<input>", e))?;
        let rest = header
            .strip_prefix("#KMEANS")
            .ok_or_else(|| Error::Format("missing #KMEANS header".into()))?;
        let (mut k, mut dim, mut layer, mut seed, mut inertia) = (None, None, None, None, None);
        for field in rest.split_ascii_whitespace() {
            let (key, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header field {field:?}")))?;
            let bad = || Error::Format(format!("bad header value {field:?}"));
            match key {
                "k" => k = Some(v.parse::<usize>().map_err(|_| bad())?),
                "dim" => dim = Some(v.parse::<usize>().map_err(|_| bad())?),
                "layer" => layer = Some(v.parse::<i64>().map_err(|_| bad())?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad())?),
                "inertia" => inertia = Some(v.parse::<f64>().map_err(|_| bad())?),
                _ => return Err(Error::Format(format!("unknown header field {key:?}"))),
            }
        }
        let missing = |f: &str| Error::Format(format!("k-means header lacks {f}"));
        let k = k.ok_or_else(|| missing("k"))?;
        let dim = dim.ok_or_else(|| missing("dim"))?;
        let mut rows = Vec::with_capacity(k);
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("<input>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_ascii_whitespace()
                .map(|f| f.parse::<f64>().map_err(|_| Error::parse(n + 2, format!("bad value {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != dim {
                return Err(Error::Format(format!("line {}: centroid has {} values, expected {dim}", n + 2, row.len())));
            }
            rows.push(row);
        }
        if rows.len() != k {
            return Err(Error::Format(format!("expected {k} centroids, found {}", rows.len())));
        }
        let mut model = Self::from_centroids(rows, layer.ok_or_else(|| missing("layer"))?, seed.ok_or_else(|| missing("seed"))?)?;
        model.inertia = inertia.ok_or_else(|| missing("inertia"))?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(io::open(path)?)
    }
}

/// Lloyd's algorithm with k-means++ seeding.
pub fn kmeans_fit(vectors: &[Vec<f64>], config: &KMeansConfig) -> Result<KMeansFit> {
    let k = config.k;
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    if vectors.len() < k {
        return Err(Error::Invalid(format!("{} points cannot form {k} clusters", vectors.len())));
    }
    let dim = vectors[0].len();
    if dim == 0 {
        return Err(Error::Invalid("cannot cluster zero-dimensional vectors".into()));
    }
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Invalid("vectors differ in dimension".into()));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite vector component".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = plus_plus_init(vectors, k, &mut rng);
    let mut assignment = vec![0usize; vectors.len()];
    let mut dist = vec![0f64; vectors.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        assign_all(vectors, &centroids, dim, &mut assignment, &mut dist);
        repair_empty(vectors, &mut centroids, dim, &mut assignment, &mut dist);
        let inertia: f64 = dist.iter().sum();
        trace.push(inertia);
        if iterations >= config.max_iters {
            break;
        }
        iterations += 1;

        let updated = update_centroids(vectors, &centroids, dim, &assignment);
        let shift = updated
            .chunks_exact(dim)
            .zip(centroids.chunks_exact(dim))
            .map(|(a, b)| sq_dist(a, b))
            .fold(0.0f64, f64::max)
            .sqrt();
        centroids = updated;
        if shift < config.tol {
            assign_all(vectors, &centroids, dim, &mut assignment, &mut dist);
            repair_empty(vectors, &mut centroids, dim, &mut assignment, &mut dist);
            trace.push(dist.iter().sum());
            break;
        }
    }

    let inertia = *trace.last().expect("at least one assignment step");
    Ok(KMeansFit {
        model: ClusterModel {
            layer: config.layer,
            seed: config.seed,
            inertia,
            dim,
            centroids,
        },
        inertia_trace: trace,
        iterations,
    })
}

fn plus_plus_init(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = vectors.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vectors[first].clone();
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &vectors[first])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                acc += d;
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` past the final sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            // Every point coincides with a centroid; take an unused one.
            let unused: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            unused[rng.gen_range(0..unused.len())]
        };
        chosen[pick] = true;
        centroids.extend_from_slice(&vectors[pick]);
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, &vectors[pick]));
        }
    }
    centroids
}

fn nearest(v: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(v, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign_all(vectors: &[Vec<f64>], centroids: &[f64], dim: usize, assignment: &mut [usize], dist: &mut [f64]) {
    assignment
        .par_iter_mut()
        .zip(dist.par_iter_mut())
        .zip(vectors.par_iter())
        .for_each(|((a, d), v)| {
            let (i, best) = nearest(v, centroids, dim);
            *a = i;
            *d = best;
        });
}

/// Moves each empty cluster onto the point currently farthest from its
/// centroid.
fn repair_empty(
    vectors: &[Vec<f64>],
    centroids: &mut [f64],
    dim: usize,
    assignment: &mut [usize],
    dist: &mut [f64],
) {
    let k = centroids.len() / dim;
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    for cluster in 0..k {
        if sizes[cluster] > 0 {
            continue;
        }
        let Some((far, &d)) = dist
            .iter()
            .enumerate()
            .filter(|&(i, _)| sizes[assignment[i]] > 1)
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        else {
            break;
        };
        if d <= 0.0 {
            break;
        }
        sizes[assignment[far]] -= 1;
        sizes[cluster] = 1;
        assignment[far] = cluster;
        dist[far] = 0.0;
        centroids[cluster * dim..(cluster + 1) * dim].copy_from_slice(&vectors[far]);
    }
}

fn update_centroids(vectors: &[Vec<f64>], centroids: &[f64], dim: usize, assignment: &[usize]) -> Vec<f64> {
    let k = centroids.len() / dim;
    let mut sums = vec![0.0; k * dim];
    let mut sizes = vec![0usize; k];
    for (v, &a) in vectors.iter().zip(assignment) {
        sizes[a] += 1;
        for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(v) {
            *s += x;
        }
    }
    for (cluster, &size) in sizes.iter().enumerate() {
        let row = &mut sums[cluster * dim..(cluster + 1) * dim];
        if size == 0 {
            row.copy_from_slice(&centroids[cluster * dim..(cluster + 1) * dim]);
        } else {
            for s in row.iter_mut() {
                *s /= size as f64;
            }
        }
    }
    sums
}
