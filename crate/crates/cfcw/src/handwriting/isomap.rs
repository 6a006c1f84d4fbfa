//! Isomap flattening of a fitted writing surface.
//!
//! Ink is a set of thin curves, so a neighbour graph built on the ink
//! alone falls apart between strokes and its shortest paths follow the
//! pen rather than the surface. The graph here is built on a grid sampled
//! from the fitted surface instead. Edge weights are the arc length of the
//! lifted parameter segment, shortest paths give surface geodesics,
//! classical MDS embeds the grid, and ink points are placed by bilinear
//! interpolation in the embedded grid.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::surface::SurfaceModel;
use crate::error::{Error, Result};
use crate::sim::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsomapConfig {
    /// Approximate number of grid nodes sampled from the surface.
    pub grid_nodes: usize,
    /// Neighbours per node in the geodesic graph; 0 links every pair.
    pub k_neighbors: usize,
    /// Sub-segments used to measure each lifted edge.
    pub edge_samples: usize,
}

impl Default for IsomapConfig {
    fn default() -> Self {
        IsomapConfig {
            grid_nodes: 400,
            k_neighbors: 0,
            edge_samples: 8,
        }
    }
}

/// 2D coordinates for each input point plus the grid embedding stress.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Vec<[f64; 2]>,
    /// `sqrt(Σ(g - e)² / Σ g²)` over grid node pairs, with `g` the graph
    /// geodesic and `e` the embedded distance.
    pub stress: f64,
}

struct Grid {
    u0: f64,
    v0: f64,
    du: f64,
    dv: f64,
    nu: usize,
    nv: usize,
}

impl Grid {
    fn node(&self, a: usize, b: usize) -> (f64, f64) {
        (self.u0 + a as f64 * self.du, self.v0 + b as f64 * self.dv)
    }

    fn len(&self) -> usize {
        self.nu * self.nv
    }
}

fn lifted_length(s: &SurfaceModel, a: (f64, f64), b: (f64, f64), steps: usize) -> f64 {
    let mut prev = s.point(a.0, a.1);
    let mut total = 0.0;
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let p = s.point(a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
        total += (p - prev).norm();
        prev = p;
    }
    total
}

fn components(adj: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut stack = vec![s];
        seen[s] = true;
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for &(w, _) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

/// Dense-array Dijkstra; the graphs are small and often complete.
fn shortest_paths(adj: &[Vec<(usize, f64)>], src: usize) -> Vec<f64> {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[src] = 0.0;
    for _ in 0..n {
        let mut v = usize::MAX;
        let mut best = f64::INFINITY;
        for (i, &d) in dist.iter().enumerate() {
            if !done[i] && d < best {
                best = d;
                v = i;
            }
        }
        if v == usize::MAX {
            break;
        }
        done[v] = true;
        for &(w, len) in &adj[v] {
            let nd = best + len;
            if nd < dist[w] {
                dist[w] = nd;
            }
        }
    }
    dist
}

/// Classical MDS of a distance matrix into two dimensions.
fn classical_mds(d: &DMatrix<f64>) -> Result<Vec<[f64; 2]>> {
    let n = d.nrows();
    let sq = d.map(|x| x * x);
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let all_mean = row_mean.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + all_mean));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if l2 <= 0.0 {
        return Err(Error::DegenerateCloud("geodesic distances are not two-dimensional".into()));
    }
    let (s1, s2) = (l1.sqrt(), l2.sqrt());
    Ok((0..n)
        .map(|i| {
            [
                eig.eigenvectors[(i, order[0])] * s1,
                eig.eigenvectors[(i, order[1])] * s2,
            ]
        })
        .collect())
}

/// Flattens `points` (lying on or near `surface`) to 2D.
pub fn isomap_embed(points: &[Point3], surface: &SurfaceModel, cfg: &IsomapConfig) -> Result<Embedding> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points to flatten", points.len())));
    }
    if cfg.grid_nodes < 9 || cfg.edge_samples == 0 {
        return Err(Error::config("isomap grid needs at least 9 nodes and one edge sample"));
    }
    let local: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let l = surface.to_local(p);
            (l.x, l.y)
        })
        .collect();
    if local.iter().any(|(u, v)| !u.is_finite() || !v.is_finite()) {
        return Err(Error::arg("non-finite point to flatten"));
    }
    let (mut ulo, mut uhi, mut vlo, mut vhi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(u, v) in &local {
        ulo = ulo.min(u);
        uhi = uhi.max(u);
        vlo = vlo.min(v);
        vhi = vhi.max(v);
    }
    let pad = 0.01 * (uhi - ulo).max(vhi - vlo) + 1e-9;
    let (ulo, uhi, vlo, vhi) = (ulo - pad, uhi + pad, vlo - pad, vhi + pad);
    let aspect = (uhi - ulo) / (vhi - vlo);
    let nu = ((cfg.grid_nodes as f64 * aspect).sqrt().round() as usize).clamp(3, cfg.grid_nodes / 3);
    let nv = (cfg.grid_nodes / nu).max(3);
    let grid = Grid {
        u0: ulo,
        v0: vlo,
        du: (uhi - ulo) / (nu - 1) as f64,
        dv: (vhi - vlo) / (nv - 1) as f64,
        nu,
        nv,
    };
    let n = grid.len();
    let params: Vec<(f64, f64)> = (0..n).map(|i| grid.node(i % nu, i / nu)).collect();

    let adj: Vec<Vec<(usize, f64)>> = {
        let mut adj: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut cand: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                if cfg.k_neighbors > 0 && cfg.k_neighbors < cand.len() {
                    let pd = |j: usize| {
                        let (a, b) = (params[i], params[j]);
                        (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
                    };
                    cand.sort_by(|&a, &b| pd(a).total_cmp(&pd(b)).then(a.cmp(&b)));
                    cand.truncate(cfg.k_neighbors);
                }
                cand.into_iter()
                    .map(|j| (j, lifted_length(surface, params[i], params[j], cfg.edge_samples)))
                    .collect()
            })
            .collect();
        // symmetrise a k-NN graph
        if cfg.k_neighbors > 0 {
            let edges: Vec<(usize, usize, f64)> = adj
                .iter()
                .enumerate()
                .flat_map(|(i, e)| e.iter().map(move |&(j, w)| (i, j, w)))
                .collect();
            for (i, j, w) in edges {
                if !adj[j].iter().any(|&(k, _)| k == i) {
                    adj[j].push((i, w));
                }
            }
        }
        adj
    };
    let sizes = components(&adj);
    if sizes.len() > 1 {
        return Err(Error::DisconnectedGraph(sizes));
    }

    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| shortest_paths(&adj, s)).collect();
    let geo = DMatrix::from_fn(n, n, |i, j| 0.5 * (rows[i][j] + rows[j][i]));
    let emb = classical_mds(&geo)?;

    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let e = ((emb[i][0] - emb[j][0]).powi(2) + (emb[i][1] - emb[j][1]).powi(2)).sqrt();
            num += (geo[(i, j)] - e).powi(2);
            den += geo[(i, j)].powi(2);
        }
    }
    let stress = (num / den).sqrt();

    let coords = local
        .iter()
        .map(|&(u, v)| {
            let fu = ((u - grid.u0) / grid.du).clamp(0.0, (nu - 1) as f64);
            let fv = ((v - grid.v0) / grid.dv).clamp(0.0, (nv - 1) as f64);
            let a = (fu.floor() as usize).min(nu - 2);
            let b = (fv.floor() as usize).min(nv - 2);
            let (tu, tv) = (fu - a as f64, fv - b as f64);
            let at = |x: usize, y: usize| emb[y * nu + x];
            let mut out = [0.0; 2];
            for (k, o) in out.iter_mut().enumerate() {
                *o = at(a, b)[k] * (1.0 - tu) * (1.0 - tv)
                    + at(a + 1, b)[k] * tu * (1.0 - tv)
                    + at(a, b + 1)[k] * (1.0 - tu) * tv
                    + at(a + 1, b + 1)[k] * tu * tv;
            }
            out
        })
        .collect::<Vec<_>>();

    // Keep the handedness of the surface frame seen along its normal.
    let c = (nv / 2) * nu + nu / 2;
    let xu = [emb[c + 1][0] - emb[c][0], emb[c + 1][1] - emb[c][1]];
    let xv = [emb[c + nu][0] - emb[c][0], emb[c + nu][1] - emb[c][1]];
    let flip = xu[0] * xv[1] - xu[1] * xv[0] < 0.0;
    let coords = coords.into_iter().map(|[x, y]| if flip { [x, -y] } else { [x, y] }).collect();
    Ok(Embedding { coords, stress })
}
