//! Hyper-rectangular regions and their columnar storage.

use crate::error::{QuadError, Result};

/// Axis-aligned box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`.
///
/// Every axis has strictly positive, finite extent.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRect {
    pub(crate) lo: Vec<f64>,
    pub(crate) hi: Vec<f64>,
}

impl HyperRect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(QuadError::InvalidRect("dimension must be at least 1".into()));
        }
        if lo.len() != hi.len() {
            return Err(QuadError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (axis, (&a, &b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(QuadError::InvalidRect(format!(
                    "axis {axis} has bounds [{a}, {b}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The unit hypercube `[0,1]^d`.
    pub fn unit(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| midpoint(a, b))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        volume(self)
    }

    /// Longest axis, lowest index on ties.
    pub fn longest_axis(&self) -> usize {
        let mut best = 0;
        for axis in 1..self.dim() {
            if self.extent(axis) > self.extent(best) {
                best = axis;
            }
        }
        best
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&a, &b))| a <= v && v <= b)
    }
}

#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    lo + 0.5 * (hi - lo)
}

/// Product of the extents of `rect`.
pub fn volume(rect: &HyperRect) -> f64 {
    rect.lo
        .iter()
        .zip(&rect.hi)
        .map(|(&a, &b)| b - a)
        .product()
}

/// Bisects `rect` at the midpoint of `axis`, returning `(lower, upper)`.
pub fn split(rect: &HyperRect, axis: usize) -> Result<(HyperRect, HyperRect)> {
    if axis >= rect.dim() {
        return Err(QuadError::AxisOutOfRange {
            axis,
            dim: rect.dim(),
        });
    }
    let mid = midpoint(rect.lo[axis], rect.hi[axis]);
    let mut lower = rect.clone();
    let mut upper = rect.clone();
    lower.hi[axis] = mid;
    upper.lo[axis] = mid;
    Ok((lower, upper))
}

/// Partitions `domain` into exactly `k` boxes by repeatedly bisecting the
/// largest box (first in list order on ties) along its longest axis.
///
/// The upper child is inserted right after the lower one, so the output is in
/// spatially coherent order.
pub fn uniform_partition(domain: &HyperRect, k: usize) -> Result<Vec<HyperRect>> {
    if k == 0 {
        return Err(QuadError::InvalidConfig(
            "partition size must be at least 1".into(),
        ));
    }
    let mut parts = vec![domain.clone()];
    let mut volumes = vec![domain.volume()];
    while parts.len() < k {
        let mut largest = 0;
        for (i, &v) in volumes.iter().enumerate().skip(1) {
            if v > volumes[largest] {
                largest = i;
            }
        }
        let (a, b) = split(&parts[largest], parts[largest].longest_axis())?;
        volumes[largest] = a.volume();
        volumes.insert(largest + 1, b.volume());
        parts[largest] = a;
        parts.insert(largest + 1, b);
    }
    Ok(parts)
}

/// One region with its local estimates, as read back from a [`RegionStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRecord {
    pub rect: HyperRect,
    pub integral: f64,
    pub error: f64,
    /// Set once the region has been evaluated by a rule.
    pub split_axis: Option<usize>,
}

/// Structure-of-arrays batch of regions.
///
/// Bounds are stored one column per axis; estimates one column per field. All
/// columns have the same length. Regions whose `split_axis` is unset have not
/// been evaluated yet; their `integral`/`error` hold inherited (parent-derived)
/// estimates or zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionStore {
    dim: usize,
    lo: Vec<Vec<f64>>,
    hi: Vec<Vec<f64>>,
    integral: Vec<f64>,
    error: Vec<f64>,
    split_axis: Vec<Option<u16>>,
    active: Vec<bool>,
}

impl RegionStore {
    pub fn new(dim: usize) -> Self {
        Self::with_capacity(dim, 0)
    }

    pub fn with_capacity(dim: usize, cap: usize) -> Self {
        assert!(dim >= 1 && dim <= u16::MAX as usize);
        Self {
            dim,
            lo: (0..dim).map(|_| Vec::with_capacity(cap)).collect(),
            hi: (0..dim).map(|_| Vec::with_capacity(cap)).collect(),
            integral: Vec::with_capacity(cap),
            error: Vec::with_capacity(cap),
            split_axis: Vec::with_capacity(cap),
            active: Vec::with_capacity(cap),
        }
    }

    pub fn from_rects<'a, I>(dim: usize, rects: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a HyperRect>,
    {
        let mut store = Self::new(dim);
        for r in rects {
            store.push_rect(r)?;
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.integral.len()
    }

    pub fn is_empty(&self) -> bool {
        self.integral.is_empty()
    }

    pub fn lower(&self, axis: usize) -> &[f64] {
        &self.lo[axis]
    }

    pub fn upper(&self, axis: usize) -> &[f64] {
        &self.hi[axis]
    }

    pub fn integrals(&self) -> &[f64] {
        &self.integral
    }

    pub fn errors(&self) -> &[f64] {
        &self.error
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn split_axis(&self, i: usize) -> Option<usize> {
        self.split_axis[i].map(usize::from)
    }

    pub fn is_evaluated(&self, i: usize) -> bool {
        self.split_axis[i].is_some()
    }

    /// Appends an unevaluated region.
    pub fn push_rect(&mut self, rect: &HyperRect) -> Result<()> {
        self.check_dim(rect.dim())?;
        self.push_raw(rect.lo(), rect.hi(), 0.0, 0.0, None);
        Ok(())
    }

    pub fn push_record(&mut self, rec: &RegionRecord) -> Result<()> {
        self.check_dim(rec.rect.dim())?;
        if let Some(axis) = rec.split_axis {
            if axis >= self.dim {
                return Err(QuadError::AxisOutOfRange {
                    axis,
                    dim: self.dim,
                });
            }
        }
        if !(rec.error >= 0.0 && rec.error.is_finite()) {
            return Err(QuadError::InvalidRect(format!(
                "region error must be finite and non-negative, got {}",
                rec.error
            )));
        }
        self.push_raw(
            rec.rect.lo(),
            rec.rect.hi(),
            rec.integral,
            rec.error,
            rec.split_axis,
        );
        Ok(())
    }

    /// Appends every region of `other`, keeping its estimates.
    pub fn append(&mut self, mut other: RegionStore) -> Result<()> {
        self.check_dim(other.dim)?;
        for axis in 0..self.dim {
            self.lo[axis].append(&mut other.lo[axis]);
            self.hi[axis].append(&mut other.hi[axis]);
        }
        self.integral.append(&mut other.integral);
        self.error.append(&mut other.error);
        self.split_axis.append(&mut other.split_axis);
        self.active.append(&mut other.active);
        Ok(())
    }

    pub(crate) fn push_raw(
        &mut self,
        lo: &[f64],
        hi: &[f64],
        integral: f64,
        error: f64,
        split_axis: Option<usize>,
    ) {
        debug_assert_eq!(lo.len(), self.dim);
        for axis in 0..self.dim {
            self.lo[axis].push(lo[axis]);
            self.hi[axis].push(hi[axis]);
        }
        self.integral.push(integral);
        self.error.push(error);
        self.split_axis.push(split_axis.map(|a| a as u16));
        self.active.push(true);
    }

    /// Copies the bounds of region `i` into the caller's buffers.
    #[inline]
    pub fn bounds_into(&self, i: usize, lo: &mut [f64], hi: &mut [f64]) {
        for axis in 0..self.dim {
            lo[axis] = self.lo[axis][i];
            hi[axis] = self.hi[axis][i];
        }
    }

    pub fn rect(&self, i: usize) -> HyperRect {
        HyperRect {
            lo: (0..self.dim).map(|a| self.lo[a][i]).collect(),
            hi: (0..self.dim).map(|a| self.hi[a][i]).collect(),
        }
    }

    pub fn record(&self, i: usize) -> RegionRecord {
        RegionRecord {
            rect: self.rect(i),
            integral: self.integral[i],
            error: self.error[i],
            split_axis: self.split_axis(i),
        }
    }

    pub fn volume(&self, i: usize) -> f64 {
        (0..self.dim)
            .map(|a| self.hi[a][i] - self.lo[a][i])
            .product()
    }

    pub fn extent(&self, i: usize, axis: usize) -> f64 {
        self.hi[axis][i] - self.lo[axis][i]
    }

    pub fn set_estimate(&mut self, i: usize, integral: f64, error: f64, split_axis: usize) {
        debug_assert!(split_axis < self.dim);
        debug_assert!(error >= 0.0);
        self.integral[i] = integral;
        self.error[i] = error;
        self.split_axis[i] = Some(split_axis as u16);
    }

    pub fn deactivate(&mut self, i: usize) {
        self.active[i] = false;
    }

    /// Drops inactive regions, preserving the order of the rest.
    pub fn compact(&mut self) {
        if self.active.iter().all(|&a| a) {
            return;
        }
        let keep = self.active.clone();
        let retain = |col: &mut Vec<f64>| {
            let mut k = keep.iter();
            col.retain(|_| *k.next().unwrap());
        };
        for axis in 0..self.dim {
            retain(&mut self.lo[axis]);
            retain(&mut self.hi[axis]);
        }
        retain(&mut self.integral);
        retain(&mut self.error);
        let mut k = keep.iter();
        self.split_axis.retain(|_| *k.next().unwrap());
        self.active.retain(|&a| a);
    }

    /// Moves the regions at `indices` into a new store (in the given order);
    /// the remaining regions keep their relative order.
    pub fn extract(&mut self, indices: &[usize]) -> RegionStore {
        let mut out = RegionStore::with_capacity(self.dim, indices.len());
        let mut lo = vec![0.0; self.dim];
        let mut hi = vec![0.0; self.dim];
        for &i in indices {
            assert!(self.active[i], "region {i} extracted twice");
            self.bounds_into(i, &mut lo, &mut hi);
            out.push_raw(
                &lo,
                &hi,
                self.integral[i],
                self.error[i],
                self.split_axis(i),
            );
            self.active[i] = false;
        }
        self.compact();
        out
    }

    pub fn rects(&self) -> impl Iterator<Item = HyperRect> + '_ {
        (0..self.len()).map(move |i| self.rect(i))
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(QuadError::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(lo: &[f64], hi: &[f64]) -> HyperRect {
        HyperRect::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    #[test]
    fn volumes() {
        assert_eq!(volume(&HyperRect::unit(3)), 1.0);
        assert_eq!(volume(&rect(&[0.0, 0.0], &[1.0, 0.5])), 0.5);
        assert_eq!(volume(&HyperRect::cube(4, 0.25, 0.75).unwrap()), 0.0625);
    }

    #[test]
    fn rejects_degenerate_rects() {
        assert!(HyperRect::new(vec![0.0], vec![0.0]).is_err());
        assert!(HyperRect::new(vec![1.0], vec![0.0]).is_err());
        assert!(HyperRect::new(vec![], vec![]).is_err());
        assert!(HyperRect::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(HyperRect::new(vec![0.0], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn split_examples() {
        let (a, b) = split(&HyperRect::unit(2), 0).unwrap();
        assert_eq!(a, rect(&[0.0, 0.0], &[0.5, 1.0]));
        assert_eq!(b, rect(&[0.5, 0.0], &[1.0, 1.0]));

        let (a, b) = split(&HyperRect::unit(1), 0).unwrap();
        assert_eq!(a, rect(&[0.0], &[0.5]));
        assert_eq!(b, rect(&[0.5], &[1.0]));

        let (a, b) = split(&rect(&[0.2, 0.0], &[0.6, 1.0]), 0).unwrap();
        assert!((a.hi()[0] - 0.4).abs() < 1e-16 && a.lo()[0] == 0.2);
        assert_eq!(a.hi()[0], b.lo()[0]);
        assert_eq!(b.hi()[0], 0.6);
        assert_eq!(a.lo()[1], 0.0);
        assert_eq!(a.hi()[1], 1.0);
    }

    #[test]
    fn split_axis_out_of_range() {
        assert_eq!(
            split(&HyperRect::unit(2), 2),
            Err(QuadError::AxisOutOfRange { axis: 2, dim: 2 })
        );
    }

    #[test]
    fn partition_examples() {
        let sq = HyperRect::unit(2);
        assert_eq!(uniform_partition(&sq, 1).unwrap(), vec![sq.clone()]);

        let halves = uniform_partition(&sq, 2).unwrap();
        assert_eq!(halves, vec![rect(&[0.0, 0.0], &[0.5, 1.0]), rect(&[0.5, 0.0], &[1.0, 1.0])]);

        let octants = uniform_partition(&HyperRect::unit(3), 8).unwrap();
        assert_eq!(octants.len(), 8);
        for o in &octants {
            for axis in 0..3 {
                assert_eq!(o.extent(axis), 0.5);
            }
        }
        // every corner of the cube appears in exactly one octant
        for corner in 0..8u32 {
            let p: Vec<f64> = (0..3).map(|a| 0.25 + 0.5 * ((corner >> a) & 1) as f64).collect();
            assert_eq!(octants.iter().filter(|o| o.contains(&p)).count(), 1);
        }
        assert!(uniform_partition(&sq, 0).is_err());
    }

    #[test]
    fn store_extract_and_compact() {
        let parts = uniform_partition(&HyperRect::unit(2), 5).unwrap();
        let mut store = RegionStore::from_rects(2, &parts).unwrap();
        for i in 0..5 {
            store.set_estimate(i, i as f64, 0.1 * i as f64, i % 2);
        }
        let taken = store.extract(&[3, 1]);
        assert_eq!(taken.len(), 2);
        assert_eq!(taken.integrals(), &[3.0, 1.0]);
        assert_eq!(taken.rect(0), parts[3]);
        assert_eq!(store.integrals(), &[0.0, 2.0, 4.0]);
        assert_eq!(store.rect(2), parts[4]);

        store.deactivate(1);
        store.compact();
        assert_eq!(store.integrals(), &[0.0, 4.0]);
        assert_eq!(store.split_axis(1), Some(0));
    }

    #[test]
    fn push_record_validates() {
        let mut store = RegionStore::new(2);
        let mut rec = RegionRecord {
            rect: HyperRect::unit(2),
            integral: 1.0,
            error: -1.0,
            split_axis: Some(0),
        };
        assert!(store.push_record(&rec).is_err());
        rec.error = 0.5;
        rec.split_axis = Some(2);
        assert!(store.push_record(&rec).is_err());
        rec.split_axis = None;
        store.push_record(&rec).unwrap();
        assert!(store.push_rect(&HyperRect::unit(3)).is_err());
    }

    fn arb_rect(dim: usize) -> impl Strategy<Value = HyperRect> {
        proptest::collection::vec((-10.0f64..10.0, 1e-3f64..5.0), dim).prop_map(|v| {
            let lo = v.iter().map(|p| p.0).collect();
            let hi = v.iter().map(|p| p.0 + p.1).collect();
            HyperRect::new(lo, hi).unwrap()
        })
    }

    proptest! {
        #[test]
        fn split_conserves_volume(r in arb_rect(3), axis in 0usize..3) {
            let (a, b) = split(&r, axis).unwrap();
            let v = r.volume();
            prop_assert!((a.volume() + b.volume() - v).abs() <= 4.0 * f64::EPSILON * v);
            for ax in 0..3 {
                if ax != axis {
                    prop_assert_eq!(a.lo()[ax], r.lo()[ax]);
                    prop_assert_eq!(b.hi()[ax], r.hi()[ax]);
                }
            }
        }

        #[test]
        fn partition_covers_domain(r in arb_rect(3), k in 1usize..70) {
            let parts = uniform_partition(&r, k).unwrap();
            prop_assert_eq!(parts.len(), k);
            let total: f64 = parts.iter().map(|p| p.volume()).sum();
            prop_assert!((total - r.volume()).abs() <= 1e-12 * r.volume());
            // interiors are disjoint: overlap volume of every pair is zero
            for i in 0..k {
                for j in i + 1..k {
                    let overlap: f64 = (0..3)
                        .map(|a| (parts[i].hi()[a].min(parts[j].hi()[a])
                            - parts[i].lo()[a].max(parts[j].lo()[a])).max(0.0))
                        .product();
                    prop_assert_eq!(overlap, 0.0);
                }
            }
        }

        #[test]
        fn store_round_trip(
            recs in proptest::collection::vec((arb_rect(2), -5.0f64..5.0, 0.0f64..1.0, proptest::option::of(0usize..2)), 0..20)
        ) {
            let mut store = RegionStore::new(2);
            let records: Vec<RegionRecord> = recs
                .into_iter()
                .map(|(rect, integral, error, split_axis)| RegionRecord { rect, integral, error, split_axis })
                .collect();
            for r in &records {
                store.push_record(r).unwrap();
            }
            prop_assert_eq!(store.len(), records.len());
            for (i, r) in records.iter().enumerate() {
                prop_assert_eq!(&store.record(i), r);
            }
        }
    }
}
