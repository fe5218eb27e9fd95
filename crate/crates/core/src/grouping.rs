//! Block matching of `s×s×n₃` cubes into fourth-order groups, and the inverse
//! pixel-averaging aggregation.
//!
//! Coordinates are 0-based top-left corners `(row, col)`; a cube at `(r, c)`
//! spans rows `r..r+s`, columns `c..c+s` and every channel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, param_err, Result};
use crate::scalar::Real;
use crate::tensor::{DenseTensor, ObservationMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CubeCoord {
    pub row: usize,
    pub col: usize,
}

impl CubeCoord {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Block-matching parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupingParams {
    /// Cube side length `s`.
    pub cube_size: usize,
    /// Overlap `o` between neighbouring reference cubes.
    pub overlap: usize,
    /// Cubes per group `h`, reference included.
    pub similar: usize,
    /// Half-width of the square search window; `None` searches the whole frame.
    pub window: Option<usize>,
    #[serde(default)]
    pub distance: MatchDistance,
}

/// How cubes of an incomplete observation are compared during matching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchDistance {
    /// Squared Euclidean distance between zero-filled cubes.
    ZeroFilled,
    /// Mean squared difference over the entries observed in both cubes.
    /// Candidates sharing fewer than [`MIN_CO_OBSERVED`] entries with the
    /// reference rank after all others.
    #[default]
    CoObserved,
}

pub const MIN_CO_OBSERVED: usize = 8;

impl Default for GroupingParams {
    fn default() -> Self {
        Self {
            cube_size: 16,
            overlap: 1,
            similar: 42,
            window: Some(40),
            distance: MatchDistance::CoObserved,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupGeometry {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub cube_size: usize,
    pub overlap: usize,
    pub similar: usize,
}

/// `h` similar cubes stacked along a fourth mode; `members[0]` is the reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Group<T> {
    pub stack: DenseTensor<T>,
    pub members: Vec<CubeCoord>,
}

#[derive(Clone, Debug)]
pub struct GroupSet<T> {
    pub groups: Vec<Group<T>>,
    pub geometry: GroupGeometry,
}

fn axis_positions(n: usize, s: usize, step: usize) -> Vec<usize> {
    let last = n - s;
    let mut out: Vec<usize> = (0..=last).step_by(step).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

/// Reference cube corners on a stride-`(s − o)` grid, with the final row and
/// column clamped to `n − s` so the grid covers every pixel. Row-major order.
pub fn make_reference_grid(n1: usize, n2: usize, s: usize, o: usize) -> Result<Vec<CubeCoord>> {
    if s == 0 || o >= s {
        return Err(param_err!("need 0 ≤ overlap < cube size, got o={o}, s={s}"));
    }
    if s > n1.min(n2) {
        return Err(param_err!(
            "cube size {s} exceeds the spatial extent {n1}×{n2}"
        ));
    }
    let rows = axis_positions(n1, s, s - o);
    let cols = axis_positions(n2, s, s - o);
    Ok(rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| CubeCoord::new(r, c)))
        .collect())
}

fn check_third_order<T: Real>(t: &DenseTensor<T>, s: usize) -> Result<(usize, usize, usize)> {
    let &[n1, n2, n3] = t.shape() else {
        return Err(param_err!(
            "block matching needs a third-order tensor, got shape {:?}",
            t.shape()
        ));
    };
    if s == 0 || s > n1.min(n2) {
        return Err(param_err!("cube size {s} does not fit in {n1}×{n2}"));
    }
    Ok((n1, n2, n3))
}

/// Copies the cube at `at` into `out` in first-index-fastest `(i, j, c)` order.
fn read_cube<T: Copy>(data: &[T], n1: usize, n2: usize, n3: usize, at: CubeCoord, s: usize, out: &mut [T]) {
    let mut o = 0;
    for c in 0..n3 {
        for j in 0..s {
            let base = at.row + n1 * (at.col + j + n2 * c);
            out[o..o + s].copy_from_slice(&data[base..base + s]);
            o += s;
        }
    }
}

fn cube_distance<T: Real>(data: &[T], n1: usize, n2: usize, n3: usize, at: CubeCoord, s: usize, reference: &[T]) -> T {
    let mut acc = T::zero();
    let mut o = 0;
    for c in 0..n3 {
        for j in 0..s {
            let base = at.row + n1 * (at.col + j + n2 * c);
            for (&x, &y) in data[base..base + s].iter().zip(&reference[o..o + s]) {
                let d = x - y;
                acc += d * d;
            }
            o += s;
        }
    }
    acc
}

/// Candidate corners within `window` of `reference`, in row-major order.
fn candidates(n1: usize, n2: usize, s: usize, reference: CubeCoord, window: Option<usize>) -> Vec<CubeCoord> {
    let span = |p: usize, n: usize| match window {
        Some(w) => (p.saturating_sub(w), (p + w).min(n - s)),
        None => (0, n - s),
    };
    let (r0, r1) = span(reference.row, n1);
    let (c0, c1) = span(reference.col, n2);
    (r0..=r1)
        .flat_map(|r| (c0..=c1).map(move |c| CubeCoord::new(r, c)))
        .collect()
}

fn co_observed_distance<T: Real>(
    t: &DenseTensor<T>,
    mask: &ObservationMask,
    a: CubeCoord,
    b: CubeCoord,
    s: usize,
) -> T {
    let &[n1, n2, n3] = t.shape() else { unreachable!("checked third order") };
    let (data, known) = (t.data(), mask.known());
    let mut acc = T::zero();
    let mut count = 0usize;
    for c in 0..n3 {
        for j in 0..s {
            let pa = a.row + n1 * (a.col + j + n2 * c);
            let pb = b.row + n1 * (b.col + j + n2 * c);
            for i in 0..s {
                if known[pa + i] && known[pb + i] {
                    let d = data[pa + i] - data[pb + i];
                    acc += d * d;
                    count += 1;
                }
            }
        }
    }
    if count < MIN_CO_OBSERVED {
        return T::infinity();
    }
    acc / T::from_usize(count).unwrap()
}

fn check_reference<T: Real>(t: &DenseTensor<T>, reference: CubeCoord, h: usize, s: usize) -> Result<(usize, usize, usize)> {
    let (n1, n2, n3) = check_third_order(t, s)?;
    if h == 0 {
        return Err(param_err!("group size h must be at least 1"));
    }
    if reference.row + s > n1 || reference.col + s > n2 {
        return Err(param_err!(
            "reference cube at {reference:?} exceeds the {n1}×{n2} frame"
        ));
    }
    Ok((n1, n2, n3))
}

/// Keeps the reference plus the `h − 1` best-scoring candidates.
fn select_members<T: Real>(
    n1: usize,
    n2: usize,
    reference: CubeCoord,
    h: usize,
    s: usize,
    window: Option<usize>,
    score: impl Fn(CubeCoord) -> T,
) -> Result<Vec<(CubeCoord, T)>> {
    let cands = candidates(n1, n2, s, reference, window);
    if cands.len() < h {
        return Err(input_err!(
            "only {} candidate cubes within search window {} of {reference:?}, need h={h}",
            cands.len(),
            window.map_or("unbounded".to_string(), |w| w.to_string())
        ));
    }
    let mut scored: Vec<(CubeCoord, T)> = cands
        .into_iter()
        .filter(|&c| c != reference)
        .map(|c| (c, score(c)))
        .collect();
    scored.sort_by(|a, b| {
        a.1.to_f64_lossy()
            .total_cmp(&b.1.to_f64_lossy())
            .then(a.0.cmp(&b.0))
    });
    let mut out = Vec::with_capacity(h);
    out.push((reference, T::zero()));
    out.extend(scored.into_iter().take(h - 1));
    Ok(out)
}

/// Squared distances from the reference cube to each returned member.
pub fn match_members<T: Real>(
    t: &DenseTensor<T>,
    reference: CubeCoord,
    h: usize,
    s: usize,
    window: Option<usize>,
) -> Result<Vec<(CubeCoord, T)>> {
    let (n1, n2, n3) = check_reference(t, reference, h, s)?;
    let mut refcube = vec![T::zero(); s * s * n3];
    read_cube(t.data(), n1, n2, n3, reference, s, &mut refcube);
    select_members(n1, n2, reference, h, s, window, |c| {
        cube_distance(t.data(), n1, n2, n3, c, s, &refcube)
    })
}

/// Matching on the zero-filled observation `zf` with the metric chosen by
/// `distance`. Returned distances are in that metric.
pub fn match_members_observed<T: Real>(
    zf: &DenseTensor<T>,
    mask: &ObservationMask,
    reference: CubeCoord,
    h: usize,
    s: usize,
    window: Option<usize>,
    distance: MatchDistance,
) -> Result<Vec<(CubeCoord, T)>> {
    match distance {
        MatchDistance::ZeroFilled => match_members(zf, reference, h, s, window),
        MatchDistance::CoObserved => {
            zf.check_same_shape(mask.shape())?;
            let (n1, n2, _) = check_reference(zf, reference, h, s)?;
            select_members(n1, n2, reference, h, s, window, |c| {
                co_observed_distance(zf, mask, reference, c, s)
            })
        }
    }
}

/// Finds the `h` cubes closest (squared Euclidean distance) to `reference`
/// and stacks them along mode 4. The reference always occupies slot 0; ties
/// are broken by `(row, col)`.
pub fn block_match<T: Real>(
    t: &DenseTensor<T>,
    reference: CubeCoord,
    h: usize,
    s: usize,
    window: Option<usize>,
) -> Result<Group<T>> {
    let members: Vec<CubeCoord> = match_members(t, reference, h, s, window)?
        .into_iter()
        .map(|(c, _)| c)
        .collect();
    let stack = stack_cubes(t, &members, s)?;
    Ok(Group { stack, members })
}

/// Stacks the cubes at `members` into an `(s, s, n₃, h)` tensor.
pub fn stack_cubes<T: Real>(t: &DenseTensor<T>, members: &[CubeCoord], s: usize) -> Result<DenseTensor<T>> {
    let (n1, n2, n3) = check_third_order(t, s)?;
    let cube = s * s * n3;
    let mut data = vec![T::zero(); cube * members.len()];
    for (m, chunk) in members.iter().zip(data.chunks_mut(cube)) {
        if m.row + s > n1 || m.col + s > n2 {
            return Err(param_err!("cube at {m:?} exceeds the {n1}×{n2} frame"));
        }
        read_cube(t.data(), n1, n2, n3, *m, s, chunk);
    }
    DenseTensor::new(&[s, s, n3, members.len()], data)
}

/// Restriction of a global third-order mask to a group's member cubes.
pub fn stack_mask(mask: &ObservationMask, members: &[CubeCoord], s: usize) -> Result<ObservationMask> {
    let &[n1, n2, n3] = mask.shape() else {
        return Err(param_err!("mask must be third-order, got {:?}", mask.shape()));
    };
    let cube = s * s * n3;
    let mut known = vec![false; cube * members.len()];
    for (m, chunk) in members.iter().zip(known.chunks_mut(cube)) {
        if m.row + s > n1 || m.col + s > n2 {
            return Err(param_err!("cube at {m:?} exceeds the {n1}×{n2} frame"));
        }
        read_cube(mask.known(), n1, n2, n3, *m, s, chunk);
    }
    ObservationMask::new(&[s, s, n3, members.len()], known)
}

impl<T: Real> GroupSet<T> {
    /// Builds one group per reference cube of the grid, matching on `t`.
    pub fn build(t: &DenseTensor<T>, params: &GroupingParams) -> Result<Self> {
        let s = params.cube_size;
        let (n1, n2, n3) = check_third_order(t, s)?;
        let grid = make_reference_grid(n1, n2, s, params.overlap)?;
        let groups = grid
            .par_iter()
            .map(|&r| block_match(t, r, params.similar, s, params.window))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            groups,
            geometry: GroupGeometry {
                n1,
                n2,
                n3,
                cube_size: s,
                overlap: params.overlap,
                similar: params.similar,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Sum and coverage buffers for pixel-wise averaging of group members.
///
/// Accumulators can be filled independently and merged in any order.
#[derive(Clone, Debug)]
pub struct Aggregator<T> {
    shape: [usize; 3],
    sums: Vec<T>,
    counts: Vec<u32>,
}

impl<T: Real> Aggregator<T> {
    pub fn new(shape: [usize; 3]) -> Self {
        let [n1, n2, n3] = shape;
        Self {
            shape,
            sums: vec![T::zero(); n1 * n2 * n3],
            counts: vec![0; n1 * n2],
        }
    }

    /// Adds every member cube of a completed `(s, s, n₃, h)` stack.
    pub fn add(&mut self, stack: &DenseTensor<T>, members: &[CubeCoord]) -> Result<()> {
        let [n1, n2, n3] = self.shape;
        let &[s, s2, c3, h] = stack.shape() else {
            return Err(param_err!("group stack must be fourth-order, got {:?}", stack.shape()));
        };
        if s != s2 || c3 != n3 || h != members.len() {
            return Err(param_err!(
                "stack shape {:?} inconsistent with {} members and {n3} channels",
                stack.shape(),
                members.len()
            ));
        }
        let cube = s * s * n3;
        for (m, chunk) in members.iter().zip(stack.data().chunks(cube)) {
            if m.row + s > n1 || m.col + s > n2 {
                return Err(param_err!("cube at {m:?} exceeds the {n1}×{n2} frame"));
            }
            let mut o = 0;
            for c in 0..n3 {
                for j in 0..s {
                    let base = m.row + n1 * (m.col + j + n2 * c);
                    for (dst, &v) in self.sums[base..base + s].iter_mut().zip(&chunk[o..o + s]) {
                        *dst += v;
                    }
                    o += s;
                }
            }
            for j in 0..s {
                let base = m.row + n1 * (m.col + j);
                for cnt in &mut self.counts[base..base + s] {
                    *cnt += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(param_err!("cannot merge {:?} with {:?}", self.shape, other.shape));
        }
        for (a, &b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, &b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn coverage(&self) -> &[u32] {
        &self.counts
    }

    /// Divides sums by coverage. Fails if any pixel was never covered.
    pub fn finish(self) -> Result<DenseTensor<T>> {
        let [n1, n2, n3] = self.shape;
        if let Some(p) = self.counts.iter().position(|&c| c == 0) {
            return Err(crate::Error::Numeric(format!(
                "aggregation invariant violated: pixel ({}, {}) is not covered by any group",
                p % n1,
                p / n1
            )));
        }
        let mut data = self.sums;
        let plane = n1 * n2;
        for c in 0..n3 {
            for (v, &cnt) in data[c * plane..(c + 1) * plane].iter_mut().zip(&self.counts) {
                *v /= T::from_u32(cnt).unwrap();
            }
        }
        DenseTensor::new(&[n1, n2, n3], data)
    }
}

/// Averages completed group stacks back into an `(n₁, n₂, n₃)` tensor.
pub fn aggregate<T: Real>(groups: &[Group<T>], shape: [usize; 3]) -> Result<DenseTensor<T>> {
    let mut acc = Aggregator::new(shape);
    for g in groups {
        acc.add(&g.stack, &g.members)?;
    }
    acc.finish()
}
