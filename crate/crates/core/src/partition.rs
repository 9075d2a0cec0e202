//! Uniform box grids over a rectangle.
//!
//! Boxes are numbered row-major with x varying fastest: `index = iy * nx + ix`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::Point;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        Rect { xmin, xmax, ymin, ymax }
    }

    pub fn unit() -> Self {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    /// Axis-aligned square of half-width `a` around the origin.
    pub fn centered(a: f64) -> Self {
        Rect::new(-a, a, -a, a)
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        [0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax)]
    }

    pub fn contains(&self, [x, y]: Point) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }

    fn is_valid(&self) -> bool {
        [self.xmin, self.xmax, self.ymin, self.ymax].iter().all(|v| v.is_finite())
            && self.xmax > self.xmin
            && self.ymax > self.ymin
    }
}

/// Result of a point lookup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Located {
    Box(usize),
    Sink,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPartition {
    pub domain: Rect,
    pub depth: u32,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl BoxPartition {
    /// Splits `domain` into `2^depth` congruent boxes, x first on odd depth.
    pub fn new(domain: Rect, depth: u32) -> Result<Self> {
        if !(2..=26).contains(&depth) {
            return Err(Error::Config(format!("depth must lie in [2, 26], got {depth}")));
        }
        if !domain.is_valid() {
            return Err(Error::Config(format!("degenerate domain {domain:?}")));
        }
        let nx = 1usize << depth.div_ceil(2);
        let ny = 1usize << (depth / 2);
        Ok(BoxPartition {
            domain,
            depth,
            nx,
            ny,
            dx: domain.width() / nx as f64,
            dy: domain.height() / ny as f64,
        })
    }

    pub fn n_boxes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn box_measure(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn box_rect(&self, index: usize) -> Rect {
        let (ix, iy) = self.coords(index);
        let x0 = self.domain.xmin + ix as f64 * self.dx;
        let y0 = self.domain.ymin + iy as f64 * self.dy;
        Rect::new(x0, x0 + self.dx, y0, y0 + self.dy)
    }

    pub fn center(&self, index: usize) -> Point {
        let (ix, iy) = self.coords(index);
        [
            self.domain.xmin + (ix as f64 + 0.5) * self.dx,
            self.domain.ymin + (iy as f64 + 0.5) * self.dy,
        ]
    }

    /// Half-open lookup; the closed top/right edges belong to the last boxes.
    pub fn locate(&self, pt: Point) -> Result<Located> {
        let [x, y] = pt;
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Domain(format!("non-finite point ({x}, {y})")));
        }
        Ok(self.locate_finite(pt))
    }

    #[inline]
    pub(crate) fn locate_finite(&self, [x, y]: Point) -> Located {
        let d = &self.domain;
        if !(x >= d.xmin && x <= d.xmax && y >= d.ymin && y <= d.ymax) {
            return Located::Sink;
        }
        let ix = (((x - d.xmin) / d.width() * self.nx as f64) as usize).min(self.nx - 1);
        let iy = (((y - d.ymin) / d.height() * self.ny as f64) as usize).min(self.ny - 1);
        Located::Box(iy * self.nx + ix)
    }

    /// Boxes sharing an edge with `index`.
    pub fn neighbors(&self, index: usize) -> Vec<usize> {
        let (ix, iy) = self.coords(index);
        let mut out = Vec::with_capacity(4);
        if ix > 0 {
            out.push(index - 1);
        }
        if ix + 1 < self.nx {
            out.push(index + 1);
        }
        if iy > 0 {
            out.push(index - self.nx);
        }
        if iy + 1 < self.ny {
            out.push(index + self.nx);
        }
        out
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.n_boxes()).map(|i| self.neighbors(i)).collect()
    }

    /// Image of each box under `x -> xmin + xmax - x`.
    pub fn reflect_x(&self) -> Vec<usize> {
        (0..self.n_boxes())
            .map(|i| {
                let (ix, iy) = self.coords(i);
                self.index(self.nx - 1 - ix, iy)
            })
            .collect()
    }

    /// Image of each box under `y -> ymin + ymax - y`.
    pub fn reflect_y(&self) -> Vec<usize> {
        (0..self.n_boxes())
            .map(|i| {
                let (ix, iy) = self.coords(i);
                self.index(ix, self.ny - 1 - iy)
            })
            .collect()
    }

    /// Boxes whose centers fall inside `region`.
    pub fn boxes_in(&self, region: &Rect) -> Vec<usize> {
        (0..self.n_boxes()).filter(|&i| region.contains(self.center(i))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleScheme {
    Grid,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub per_box: usize,
    pub scheme: SampleScheme,
    pub seed: u64,
}

impl SamplePlan {
    pub fn grid(per_box: usize) -> Self {
        SamplePlan { per_box, scheme: SampleScheme::Grid, seed: 0 }
    }

    pub fn random(per_box: usize, seed: u64) -> Self {
        SamplePlan { per_box, scheme: SampleScheme::Random, seed }
    }

    /// Box-relative unit coordinates of the test points.
    pub fn unit_points(&self, box_index: usize) -> Vec<Point> {
        let n = self.per_box;
        match self.scheme {
            SampleScheme::Grid => {
                let s = (1..).find(|s| s * s >= n).unwrap();
                (0..n)
                    .map(|k| {
                        let (i, j) = (k % s, k / s);
                        [(i as f64 + 0.5) / s as f64, (j as f64 + 0.5) / s as f64]
                    })
                    .collect()
            }
            SampleScheme::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(box_index as u64);
                let mut open = || loop {
                    let u: f64 = rng.r#gen();
                    if u > 0.0 {
                        return u;
                    }
                };
                (0..n).map(|_| [open(), open()]).collect()
            }
        }
    }
}

/// Test points inside box `box_index` according to `plan`.
pub fn sample_points(partition: &BoxPartition, box_index: usize, plan: &SamplePlan) -> Vec<Point> {
    let r = partition.box_rect(box_index);
    plan.unit_points(box_index)
        .into_iter()
        .map(|[u, v]| [r.xmin + u * partition.dx, r.ymin + v * partition.dy])
        .collect()
}
