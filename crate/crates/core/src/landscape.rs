//! Objective landscapes over two free weights.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkSpec, WeightRef};
use crate::training::{nudge_zero_blocks, Evaluator, Objective, PixelSet};

/// Objective values on a regular grid; row `j` holds nodes with second coordinate `y(j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    /// Cells whose evaluation hit a degenerate all-zero operand and were stored as 0.
    pub flagged: Vec<bool>,
    /// `(column, row)` of the first maximum in row-major order.
    pub argmax_cell: (usize, usize),
}

fn node_count(range: (f64, f64), resolution: f64) -> Result<usize> {
    let (lo, hi) = range;
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::Config(format!("resolution must be > 0, got {resolution}")));
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Config(format!("invalid range [{lo}, {hi}]")));
    }
    Ok(((hi - lo) / resolution).round() as usize + 1)
}

fn coord(range: (f64, f64), n: usize, i: usize) -> f64 {
    if n <= 1 {
        range.0
    } else {
        range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64
    }
}

impl LandscapeGrid {
    /// Evaluates `f(x, y)` at every node. `Err` cells that are degenerate become 0 and are flagged.
    pub fn evaluate<F>(x_range: (f64, f64), y_range: (f64, f64), resolution: f64, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<f64> + Sync,
    {
        let nx = node_count(x_range, resolution)?;
        let ny = node_count(y_range, resolution)?;
        let cells = (0..nx * ny)
            .into_par_iter()
            .map(|c| {
                let (i, j) = (c % nx, c / nx);
                match f(coord(x_range, nx, i), coord(y_range, ny, j)) {
                    Ok(v) if v.is_finite() => Ok((v, false)),
                    Ok(v) => Err(Error::Config(format!("objective returned {v}"))),
                    Err(e) if e.is_degenerate_operand() => Ok((0.0, true)),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let (values, flagged): (Vec<f64>, Vec<bool>) = cells.into_iter().unzip();
        Ok(Self::from_values(x_range, y_range, nx, ny, values, flagged))
    }

    fn from_values(
        x_range: (f64, f64),
        y_range: (f64, f64),
        nx: usize,
        ny: usize,
        values: Vec<f64>,
        flagged: Vec<bool>,
    ) -> Self {
        let mut best = 0;
        for (k, &v) in values.iter().enumerate() {
            if v > values[best] {
                best = k;
            }
        }
        Self {
            x_range,
            y_range,
            nx,
            ny,
            values,
            flagged,
            argmax_cell: (best % nx, best / nx),
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        coord(self.x_range, self.nx, i)
    }

    pub fn y(&self, j: usize) -> f64 {
        coord(self.y_range, self.ny, j)
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn max_value(&self) -> f64 {
        let (i, j) = self.argmax_cell;
        self.value(i, j)
    }

    pub fn argmax_point(&self) -> (f64, f64) {
        let (i, j) = self.argmax_cell;
        (self.x(i), self.y(j))
    }

    pub fn pitch(&self) -> (f64, f64) {
        let step = |r: (f64, f64), n: usize| if n > 1 { (r.1 - r.0) / (n - 1) as f64 } else { 0.0 };
        (step(self.x_range, self.nx), step(self.y_range, self.ny))
    }

    /// `w1,w2,value` per node in row-major order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("w1,w2,value\n");
        for j in 0..self.ny {
            for i in 0..self.nx {
                let _ = writeln!(out, "{},{},{}", self.x(i), self.y(j), self.value(i, j));
            }
        }
        out
    }

    /// Binary PGM heatmap, value 0 black and 1 white (clamped); top row is the largest `y`.
    pub fn to_pgm(&self) -> Vec<u8> {
        self.to_pgm_scaled(0.0, 1.0)
    }

    pub fn to_pgm_scaled(&self, black: f64, white: f64) -> Vec<u8> {
        let span = if white > black { white - black } else { 1.0 };
        let mut pixels = Vec::with_capacity(self.nx * self.ny);
        for j in (0..self.ny).rev() {
            for i in 0..self.nx {
                let t = ((self.value(i, j) - black) / span).clamp(0.0, 1.0);
                pixels.push((t * 255.0).round() as u8);
            }
        }
        crate::imageio::encode_pgm(self.nx, self.ny, &pixels)
    }
}

/// Parses `w<i>,w<j>` into indices of the flattened upper-layer weights.
pub fn parse_free_pair(spec: &str) -> Result<[usize; 2]> {
    let bad = || Error::Config(format!("expected `w<i>,w<j>`, got {spec:?}"));
    let mut idx = spec.split(',').map(|part| {
        part.trim()
            .strip_prefix('w')
            .and_then(|n| n.parse::<usize>().ok())
            .ok_or_else(bad)
    });
    let (Some(i), Some(j), None) = (idx.next(), idx.next(), idx.next()) else {
        return Err(bad());
    };
    let (i, j) = (i?, j?);
    if i == j {
        return Err(Error::Config(format!("free weights must differ, got w{i} twice")));
    }
    Ok([i, j])
}

/// Parses `lo:hi`.
pub fn parse_range(spec: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("expected `lo:hi`, got {spec:?}"));
    let (lo, hi) = spec.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Config(format!("range needs finite lo < hi, got {spec:?}")));
    }
    Ok((lo, hi))
}

/// Addresses of flattened upper-layer weights, numbered layer by layer, neuron by neuron.
pub fn upper_weight_refs(net: &NetworkSpec, free: [usize; 2]) -> Result<[WeightRef; 2]> {
    let all = net.resolve(&crate::network::WeightSelector::UpperLayers)?;
    let get = |i: usize| {
        all.get(i).copied().ok_or_else(|| {
            Error::Config(format!("w{i} out of range: network has {} upper-layer weights", all.len()))
        })
    };
    Ok([get(free[0])?, get(free[1])?])
}

/// Sweeps two weights over a grid with every other weight held at its value in `net`.
pub fn sweep(
    net: &NetworkSpec,
    pixels: &PixelSet,
    free: [WeightRef; 2],
    ranges: [(f64, f64); 2],
    resolution: f64,
    objective: &Objective,
) -> Result<LandscapeGrid> {
    net.resolve(&crate::network::WeightSelector::Weights(free.to_vec()))?;
    let evaluator = Evaluator::for_refs(net, pixels, &free)?;
    LandscapeGrid::evaluate(ranges[0], ranges[1], resolution, |a, b| {
        let candidate = net.with_weights(&free, &[a, b])?;
        evaluator.objective(&candidate, objective)
    })
}

/// Like [`sweep`], but cells that would zero a neuron are nudged as during training.
pub fn sweep_nudged(
    net: &NetworkSpec,
    pixels: &PixelSet,
    free: [WeightRef; 2],
    ranges: [(f64, f64); 2],
    resolution: f64,
    objective: &Objective,
    dw: f64,
) -> Result<LandscapeGrid> {
    net.resolve(&crate::network::WeightSelector::Weights(free.to_vec()))?;
    let evaluator = Evaluator::for_refs(net, pixels, &free)?;
    LandscapeGrid::evaluate(ranges[0], ranges[1], resolution, |a, b| {
        let w = nudge_zero_blocks(net, &free, &[a, b], dw);
        let candidate = net.with_weights(&free, &w)?;
        evaluator.objective(&candidate, objective)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub level: f64,
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum EdgeKey {
    /// Between nodes (i, j) and (i + 1, j).
    Horizontal(usize, usize),
    /// Between nodes (i, j) and (i, j + 1).
    Vertical(usize, usize),
}

/// Marching-squares iso-contours with linear interpolation along cell edges.
pub fn level_sets(grid: &LandscapeGrid, levels: &[f64]) -> Vec<Contour> {
    levels.iter().flat_map(|&l| contours_at(grid, l)).collect()
}

fn contours_at(grid: &LandscapeGrid, level: f64) -> Vec<Contour> {
    let (nx, ny) = (grid.nx, grid.ny);
    if nx < 2 || ny < 2 {
        return Vec::new();
    }
    let above = |i: usize, j: usize| grid.value(i, j) > level;
    let point = |e: EdgeKey| -> (f64, f64) {
        let ((i0, j0), (i1, j1)) = match e {
            EdgeKey::Horizontal(i, j) => ((i, j), (i + 1, j)),
            EdgeKey::Vertical(i, j) => ((i, j), (i, j + 1)),
        };
        let (v0, v1) = (grid.value(i0, j0), grid.value(i1, j1));
        let t = if v1 == v0 { 0.5 } else { (level - v0) / (v1 - v0) };
        let (x0, y0, x1, y1) = (grid.x(i0), grid.y(j0), grid.x(i1), grid.y(j1));
        (x0 + t * (x1 - x0), y0 + t * (y1 - y0))
    };

    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let bottom = EdgeKey::Horizontal(i, j);
            let top = EdgeKey::Horizontal(i, j + 1);
            let left = EdgeKey::Vertical(i, j);
            let right = EdgeKey::Vertical(i + 1, j);
            let case = (above(i, j) as u8)
                | (above(i + 1, j) as u8) << 1
                | (above(i + 1, j + 1) as u8) << 2
                | (above(i, j + 1) as u8) << 3;
            match case {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 | 10 => {
                    let center = (grid.value(i, j) + grid.value(i + 1, j) + grid.value(i + 1, j + 1) + grid.value(i, j + 1)) / 4.0;
                    // Corners 0 and 2 are above in case 5; the center decides whether they connect.
                    let diag_high_connected = (center > level) == (case == 5);
                    if diag_high_connected {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let mut adjacency: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        adjacency.entry(a).or_default().push(s);
        adjacency.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();

    let walk = |start_seg: usize, start_key: EdgeKey, used: &mut Vec<bool>| -> (Vec<EdgeKey>, bool) {
        let mut keys = vec![start_key];
        let mut seg = start_seg;
        let mut key = start_key;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            key = if a == key { b } else { a };
            keys.push(key);
            match adjacency[&key].iter().find(|&&s| !used[s]) {
                Some(&next) => seg = next,
                None => break,
            }
        }
        let closed = keys.len() > 2 && keys.first() == keys.last();
        (keys, closed)
    };

    // Open chains start at edges touched by one segment (grid boundary).
    let mut starts: Vec<(EdgeKey, usize)> = adjacency
        .iter()
        .filter(|(_, segs)| segs.len() == 1)
        .map(|(&k, segs)| (k, segs[0]))
        .collect();
    starts.sort_by_key(|&(_, s)| s);
    for (key, seg) in starts {
        if !used[seg] {
            let (keys, closed) = walk(seg, key, &mut used);
            out.push(Contour {
                level,
                points: keys.into_iter().map(point).collect(),
                closed,
            });
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            let (keys, closed) = walk(s, segments[s].0, &mut used);
            out.push(Contour {
                level,
                points: keys.into_iter().map(point).collect(),
                closed,
            });
        }
    }
    out
}

/// `contour_id,level,x,y` rows; consecutive rows of one id form a polyline.
pub fn contours_to_csv(contours: &[Contour]) -> String {
    let mut out = String::from("contour_id,level,x,y\n");
    for (id, c) in contours.iter().enumerate() {
        for &(x, y) in &c.points {
            let _ = writeln!(out, "{id},{},{x},{y}", c.level);
        }
    }
    out
}

fn neighbors8(i: usize, j: usize, nx: usize, ny: usize) -> impl Iterator<Item = (usize, usize)> {
    let (i, j) = (i as i64, j as i64);
    (-1..=1)
        .flat_map(move |dj| (-1..=1).map(move |di| (i + di, j + dj)))
        .filter(move |&(a, b)| (a, b) != (i, j) && a >= 0 && b >= 0 && a < nx as i64 && b < ny as i64)
        .map(|(a, b)| (a as usize, b as usize))
}

/// Local maxima under 8-connectivity; an equal-valued plateau counts once.
pub fn basin_count(grid: &LandscapeGrid) -> usize {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut component = vec![usize::MAX; nx * ny];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..nx * ny {
        if component[start] != usize::MAX {
            continue;
        }
        let value = grid.values[start];
        let id = start;
        let mut is_max = true;
        component[start] = id;
        stack.push(start);
        while let Some(c) = stack.pop() {
            for (a, b) in neighbors8(c % nx, c / nx, nx, ny) {
                let n = b * nx + a;
                let v = grid.values[n];
                if v > value {
                    is_max = false;
                } else if v == value && component[n] == usize::MAX {
                    component[n] = id;
                    stack.push(n);
                }
            }
        }
        if is_max {
            count += 1;
        }
    }
    count
}
