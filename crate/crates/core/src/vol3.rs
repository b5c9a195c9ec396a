//! Dense 3D volumes and binary masks, HU windowing, and the VOL3 file format.
//!
//! A [`Volume3`] is a row-major (x-fastest) grid of `f32` scalars with
//! physical voxel spacing. Raw volumes carry CT Hounsfield units; after
//! [`hu_window`] the values live in `[0, 1]` and the volume is marked
//! windowed. A [`Mask3`] is a grid of booleans with the same shape contract.
//! Both types are immutable after construction and safe to share across
//! threads.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Upper bound on total voxel count accepted from file headers.
const MAX_VOXELS: u64 = 1 << 31;

/// Grid dimensions as (depth, height, width) voxel counts.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct Dims3 {
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims3 {
    pub fn new(d: usize, h: usize, w: usize) -> Self {
        Dims3 { d, h, w }
    }

    /// Cubic dims `n`³.
    pub fn cube(n: usize) -> Self {
        Dims3 { d: n, h: n, w: n }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.d * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        debug_assert!(z < self.d && y < self.h && x < self.w);
        (z * self.h + y) * self.w + x
    }

    /// Inverse of [`Dims3::index`].
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.w;
        let y = (idx / self.w) % self.h;
        let z = idx / (self.w * self.h);
        (z, y, x)
    }

    #[inline]
    pub fn in_bounds(&self, z: i64, y: i64, x: i64) -> bool {
        z >= 0 && y >= 0 && x >= 0 && (z as usize) < self.d && (y as usize) < self.h && (x as usize) < self.w
    }
}

impl fmt::Display for Dims3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.d, self.h, self.w)
    }
}

/// Physical voxel spacing in millimeters, ordered (sz, sy, sx).
pub type Spacing3 = [f32; 3];

/// Dense 3D scalar grid with physical spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3 {
    dims: Dims3,
    spacing: Spacing3,
    data: Vec<f32>,
    windowed: bool,
}

impl Volume3 {
    /// Raw (not yet windowed) volume; values may be arbitrary HU.
    pub fn new_raw(dims: Dims3, spacing: Spacing3, data: Vec<f32>) -> Result<Self> {
        Self::validate(dims, spacing, &data)?;
        Ok(Volume3 { dims, spacing, data, windowed: false })
    }

    /// Windowed volume; every value must already lie in `[0, 1]`.
    pub fn new_windowed(dims: Dims3, spacing: Spacing3, data: Vec<f32>) -> Result<Self> {
        Self::validate(dims, spacing, &data)?;
        if !data.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::param("windowed volume has values outside [0,1]"));
        }
        Ok(Volume3 { dims, spacing, data, windowed: true })
    }

    /// All-zero windowed volume.
    pub fn zeros(dims: Dims3, spacing: Spacing3) -> Self {
        Volume3 { dims, spacing, data: vec![0.0; dims.len()], windowed: true }
    }

    fn validate(dims: Dims3, spacing: Spacing3, data: &[f32]) -> Result<()> {
        if data.len() != dims.len() {
            return Err(Error::param(format!(
                "data length {} does not match dims {dims}",
                data.len()
            )));
        }
        if !spacing.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::param(format!("spacing must be strictly positive, got {spacing:?}")));
        }
        Ok(())
    }

    #[inline]
    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn spacing(&self) -> Spacing3 {
        self.spacing
    }

    pub fn windowed(&self) -> bool {
        self.windowed
    }

    #[inline]
    pub fn at(&self, z: usize, y: usize, x: usize) -> f32 {
        self.data[self.dims.index(z, y, x)]
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub(crate) fn same_shape(&self, other: Dims3) -> Result<()> {
        if self.dims != other {
            return Err(Error::ShapeMismatch(self.dims, other));
        }
        Ok(())
    }

    /// Rebuild with the same shape metadata; `windowed` is preserved only if
    /// the caller guarantees range preservation.
    pub(crate) fn with_data(&self, data: Vec<f32>, windowed: bool) -> Volume3 {
        debug_assert_eq!(data.len(), self.dims.len());
        Volume3 { dims: self.dims, spacing: self.spacing, data, windowed }
    }
}

/// Dense 3D binary grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask3 {
    dims: Dims3,
    bits: Vec<bool>,
}

impl Mask3 {
    pub fn empty(dims: Dims3) -> Self {
        Mask3 { dims, bits: vec![false; dims.len()] }
    }

    pub fn full(dims: Dims3) -> Self {
        Mask3 { dims, bits: vec![true; dims.len()] }
    }

    pub fn from_bits(dims: Dims3, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.len() {
            return Err(Error::param(format!(
                "bit count {} does not match dims {dims}",
                bits.len()
            )));
        }
        Ok(Mask3 { dims, bits })
    }

    /// Build from the set of linear indices that are set.
    pub fn from_indices(dims: Dims3, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; dims.len()];
        for &i in indices {
            if i >= bits.len() {
                return Err(Error::param(format!("index {i} out of range for dims {dims}")));
            }
            bits[i] = true;
        }
        Ok(Mask3 { dims, bits })
    }

    #[inline]
    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.bits[self.dims.index(z, y, x)]
    }

    #[inline]
    pub fn get_idx(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    #[inline]
    pub fn set_idx(&mut self, idx: usize, v: bool) {
        self.bits[idx] = v;
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of set voxels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Linear indices of the set voxels, ascending.
    pub fn set_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }

    pub(crate) fn same_shape(&self, other: Dims3) -> Result<()> {
        if self.dims != other {
            return Err(Error::ShapeMismatch(self.dims, other));
        }
        Ok(())
    }

    pub fn and(&self, other: &Mask3) -> Result<Mask3> {
        self.same_shape(other.dims)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect();
        Ok(Mask3 { dims: self.dims, bits })
    }

    pub fn or(&self, other: &Mask3) -> Result<Mask3> {
        self.same_shape(other.dims)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect();
        Ok(Mask3 { dims: self.dims, bits })
    }

    /// Set difference `self \ other`.
    pub fn minus(&self, other: &Mask3) -> Result<Mask3> {
        self.same_shape(other.dims)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a && !*b).collect();
        Ok(Mask3 { dims: self.dims, bits })
    }

    pub fn not(&self) -> Mask3 {
        Mask3 { dims: self.dims, bits: self.bits.iter().map(|b| !*b).collect() }
    }

    pub fn is_subset_of(&self, other: &Mask3) -> Result<bool> {
        self.same_shape(other.dims)?;
        Ok(self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b))
    }

    /// Tight bounding box of the set voxels as inclusive `(lo, hi)` corner
    /// coordinates, or `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<((usize, usize, usize), (usize, usize, usize))> {
        let mut lo = (usize::MAX, usize::MAX, usize::MAX);
        let mut hi = (0usize, 0usize, 0usize);
        let mut any = false;
        for idx in self.set_indices() {
            let (z, y, x) = self.dims.coords(idx);
            any = true;
            lo = (lo.0.min(z), lo.1.min(y), lo.2.min(x));
            hi = (hi.0.max(z), hi.1.max(y), hi.2.max(x));
        }
        any.then_some((lo, hi))
    }
}

/// Affine clip-and-rescale of HU values to `[0, 1]` over `[lo, hi]`.
pub fn hu_window(raw: &Volume3, lo: f32, hi: f32) -> Result<Volume3> {
    if lo >= hi {
        return Err(Error::InvalidWindow { lo, hi });
    }
    if raw.windowed {
        return Err(Error::AlreadyWindowed);
    }
    let lo = lo as f64;
    let span = hi as f64 - lo;
    let data = raw
        .data
        .iter()
        .map(|&v| (((v as f64 - lo) / span).clamp(0.0, 1.0)) as f32)
        .collect();
    Ok(raw.with_data(data, true))
}

/// Voxel-wise product with a binary mask: `out(x) = v(x)` where set, else 0.
pub fn apply_mask(v: &Volume3, m: &Mask3) -> Result<Volume3> {
    v.same_shape(m.dims)?;
    let data = v
        .data
        .iter()
        .zip(&m.bits)
        .map(|(&val, &bit)| if bit { val } else { 0.0 })
        .collect();
    Ok(v.with_data(data, v.windowed))
}

/// Indicator mask of voxels with intensity at or above `tau` (inclusive).
pub fn bright_mask(v: &Volume3, tau: f64) -> Result<Mask3> {
    if !v.windowed {
        return Err(Error::NotWindowed);
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::param(format!("tau must be in [0,1], got {tau}")));
    }
    let bits = v.data.iter().map(|&val| val as f64 >= tau).collect();
    Ok(Mask3 { dims: v.dims, bits })
}

// ---------------------------------------------------------------------------
// VOL3 file format
//
// magic `VOL3` | version u8 = 1 | dtype u8 (0 = f32 volume, 1 = bit-packed
// mask) | dims 3xu32 LE (d, h, w) | spacing 3xf32 LE (sz, sy, sx) | payload.
// Volume payload: f32 LE, row-major, x fastest. Mask payload: one row of `w`
// bits at a time, LSB-first within each byte, each row padded to a byte
// boundary. Masks carry spacing (1, 1, 1).
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"VOL3";
const VERSION: u8 = 1;
const DTYPE_VOLUME: u8 = 0;
const DTYPE_MASK: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 1 + 12 + 12;

/// Contents of a VOL3 file.
#[derive(Clone, Debug, PartialEq)]
pub enum VolData {
    Volume(Volume3),
    Mask(Mask3),
}

fn header_bytes(dtype: u8, dims: Dims3, spacing: Spacing3) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(dtype);
    for n in [dims.d, dims.h, dims.w] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for s in spacing {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Serialize a volume to VOL3 bytes.
pub fn volume_to_bytes(v: &Volume3) -> Vec<u8> {
    let mut out = header_bytes(DTYPE_VOLUME, v.dims, v.spacing);
    out.reserve(v.data.len() * 4);
    for val in &v.data {
        out.extend_from_slice(&val.to_le_bytes());
    }
    out
}

/// Serialize a mask to VOL3 bytes.
pub fn mask_to_bytes(m: &Mask3) -> Vec<u8> {
    let row_bytes = m.dims.w.div_ceil(8);
    let mut out = header_bytes(DTYPE_MASK, m.dims, [1.0, 1.0, 1.0]);
    out.reserve(row_bytes * m.dims.d * m.dims.h);
    for row in m.bits.chunks(m.dims.w) {
        let mut packed = vec![0u8; row_bytes];
        for (x, &bit) in row.iter().enumerate() {
            if bit {
                packed[x / 8] |= 1 << (x % 8);
            }
        }
        out.extend_from_slice(&packed);
    }
    out
}

/// Parse VOL3 bytes into a volume or mask.
///
/// A stored volume carries no explicit windowing marker; it is treated as
/// windowed when every value lies in `[0, 1]`.
pub fn vol_from_bytes(bytes: &[u8]) -> Result<VolData> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = bytes[4];
    if version != VERSION {
        return Err(Error::UnsupportedFormat(format!("version {version}")));
    }
    let dtype = bytes[5];
    let u32at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let (d, h, w) = (u32at(6), u32at(10), u32at(14));
    if d == 0 || h == 0 || w == 0 || (d as u128) * (h as u128) * (w as u128) > MAX_VOXELS as u128 {
        return Err(Error::DimsOverflow(d, h, w));
    }
    let dims = Dims3::new(d as usize, h as usize, w as usize);
    let f32at = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let spacing = [f32at(18), f32at(22), f32at(26)];
    if !spacing.iter().all(|s| *s > 0.0 && s.is_finite()) {
        return Err(Error::UnsupportedFormat(format!("non-positive spacing {spacing:?}")));
    }
    let payload = &bytes[HEADER_LEN..];
    match dtype {
        DTYPE_VOLUME => {
            let expected = dims.len() * 4;
            if payload.len() != expected {
                return Err(Error::Truncated {
                    expected: HEADER_LEN + expected,
                    found: bytes.len(),
                });
            }
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let windowed = data.iter().all(|v| (0.0..=1.0).contains(v));
            Ok(VolData::Volume(Volume3 { dims, spacing, data, windowed }))
        }
        DTYPE_MASK => {
            let row_bytes = dims.w.div_ceil(8);
            let expected = row_bytes * dims.d * dims.h;
            if payload.len() != expected {
                return Err(Error::Truncated {
                    expected: HEADER_LEN + expected,
                    found: bytes.len(),
                });
            }
            let mut bits = Vec::with_capacity(dims.len());
            for row in payload.chunks_exact(row_bytes) {
                for x in 0..dims.w {
                    bits.push(row[x / 8] & (1 << (x % 8)) != 0);
                }
            }
            Ok(VolData::Mask(Mask3 { dims, bits }))
        }
        other => Err(Error::UnsupportedFormat(format!("dtype {other}"))),
    }
}

pub fn write_volume(path: impl AsRef<Path>, v: &Volume3) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, volume_to_bytes(v)).map_err(|e| Error::io(path, e))
}

pub fn write_mask(path: impl AsRef<Path>, m: &Mask3) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, mask_to_bytes(m)).map_err(|e| Error::io(path, e))
}

pub fn read_vol(path: impl AsRef<Path>) -> Result<VolData> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    vol_from_bytes(&bytes)
}

/// Read a VOL3 file that must contain a volume.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume3> {
    match read_vol(&path)? {
        VolData::Volume(v) => Ok(v),
        VolData::Mask(_) => Err(Error::UnsupportedFormat(format!(
            "{}: expected volume, found mask",
            path.as_ref().display()
        ))),
    }
}

/// Read a VOL3 file that must contain a mask.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask3> {
    match read_vol(&path)? {
        VolData::Mask(m) => Ok(m),
        VolData::Volume(_) => Err(Error::UnsupportedFormat(format!(
            "{}: expected mask, found volume",
            path.as_ref().display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol_from(vals: &[f32], dims: Dims3) -> Volume3 {
        Volume3::new_raw(dims, [1.0, 1.0, 1.0], vals.to_vec()).unwrap()
    }

    #[test]
    fn hu_window_maps_known_points() {
        let raw = vol_from(&[-500.0, -800.0, 100.0, -1000.0, 2000.0], Dims3::new(1, 1, 5));
        let win = hu_window(&raw, -800.0, 100.0).unwrap();
        assert!(win.windowed());
        assert!((win.data()[0] as f64 - 1.0 / 3.0).abs() < 1e-6, "tau for T=-500");
        assert_eq!(win.data()[1], 0.0);
        assert_eq!(win.data()[2], 1.0);
        assert_eq!(win.data()[3], 0.0, "clamped below");
        assert_eq!(win.data()[4], 1.0, "clamped above");
    }

    #[test]
    fn hu_window_rejects_bad_window_and_rewindowing() {
        let raw = vol_from(&[0.0], Dims3::cube(1));
        assert!(matches!(hu_window(&raw, 100.0, -800.0), Err(Error::InvalidWindow { .. })));
        let win = hu_window(&raw, -800.0, 100.0).unwrap();
        assert!(matches!(hu_window(&win, -800.0, 100.0), Err(Error::AlreadyWindowed)));
    }

    #[test]
    fn apply_mask_identity_zero_and_checkerboard() {
        let dims = Dims3::new(2, 2, 2);
        let v = Volume3::new_windowed(dims, [1.0; 3], vec![0.5; 8]).unwrap();
        assert_eq!(apply_mask(&v, &Mask3::full(dims)).unwrap(), v);
        assert!(apply_mask(&v, &Mask3::empty(dims)).unwrap().data().iter().all(|&x| x == 0.0));

        let checker: Vec<bool> = (0..8).map(|i| i % 2 == 0).collect();
        let m = Mask3::from_bits(dims, checker).unwrap();
        let out = apply_mask(&v, &m).unwrap();
        for i in 0..8 {
            assert_eq!(out.data()[i], if i % 2 == 0 { 0.5 } else { 0.0 });
        }
    }

    #[test]
    fn apply_mask_rejects_shape_mismatch() {
        let v = Volume3::zeros(Dims3::cube(2), [1.0; 3]);
        let m = Mask3::empty(Dims3::cube(3));
        assert!(matches!(apply_mask(&v, &m), Err(Error::ShapeMismatch(..))));
    }

    #[test]
    fn bright_mask_boundary_is_inclusive() {
        let dims = Dims3::new(1, 1, 3);
        let v = Volume3::new_windowed(dims, [1.0; 3], vec![0.2, 0.33, 0.5]).unwrap();
        let m = bright_mask(&v, 0.33).unwrap();
        assert_eq!(m.bits(), &[false, true, true]);

        assert_eq!(bright_mask(&v, 0.0).unwrap().count(), 3);
        assert_eq!(bright_mask(&v, 0.51).unwrap().count(), 0);
    }

    #[test]
    fn bright_mask_requires_windowed() {
        let raw = vol_from(&[0.5], Dims3::cube(1));
        assert!(matches!(bright_mask(&raw, 0.5), Err(Error::NotWindowed)));
    }

    #[test]
    fn volume_round_trip_is_bit_exact() {
        let dims = Dims3::new(3, 4, 5);
        let data: Vec<f32> = (0..dims.len()).map(|i| (i as f32).sin() * 1000.0).collect();
        let v = Volume3::new_raw(dims, [1.5, 0.8, 0.8], data).unwrap();
        let bytes = volume_to_bytes(&v);
        match vol_from_bytes(&bytes).unwrap() {
            VolData::Volume(r) => assert_eq!(r, v),
            _ => panic!("expected volume"),
        }
    }

    #[test]
    fn mask_round_trip_with_row_padding() {
        // w = 5 forces row padding.
        let dims = Dims3::new(2, 3, 5);
        let bits: Vec<bool> = (0..dims.len()).map(|i| i % 3 == 0).collect();
        let m = Mask3::from_bits(dims, bits).unwrap();
        let bytes = mask_to_bytes(&m);
        match vol_from_bytes(&bytes).unwrap() {
            VolData::Mask(r) => assert_eq!(r, m),
            _ => panic!("expected mask"),
        }
    }

    #[test]
    fn parse_rejects_corruption_distinctly() {
        let v = Volume3::zeros(Dims3::cube(2), [1.0; 3]);
        let good = volume_to_bytes(&v);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(vol_from_bytes(&bad_magic), Err(Error::BadMagic)));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(vol_from_bytes(truncated), Err(Error::Truncated { .. })));

        let mut zero_dims = good.clone();
        zero_dims[6..10].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(vol_from_bytes(&zero_dims), Err(Error::DimsOverflow(..))));

        let mut huge = good;
        huge[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[10..14].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(vol_from_bytes(&huge), Err(Error::DimsOverflow(..))));
    }

    #[test]
    fn read_marks_in_range_volume_as_windowed() {
        let dims = Dims3::cube(2);
        let v = Volume3::new_windowed(dims, [1.0; 3], vec![0.25; 8]).unwrap();
        match vol_from_bytes(&volume_to_bytes(&v)).unwrap() {
            VolData::Volume(r) => assert!(r.windowed()),
            _ => unreachable!(),
        }
        let raw = vol_from(&[-100.0; 8], dims);
        match vol_from_bytes(&volume_to_bytes(&raw)).unwrap() {
            VolData::Volume(r) => assert!(!r.windowed()),
            _ => unreachable!(),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_dims() -> impl Strategy<Value = Dims3> {
            (1usize..6, 1usize..6, 1usize..10).prop_map(|(d, h, w)| Dims3::new(d, h, w))
        }

        proptest! {
            #[test]
            fn file_round_trip_identity(dims in arb_dims(), seed in any::<u64>()) {
                use rand::Rng;
                let mut rng = crate::seeds::rng_from(seed);
                let data: Vec<f32> = (0..dims.len()).map(|_| rng.random_range(-1200.0..200.0)).collect();
                let v = Volume3::new_raw(dims, [1.0, 0.8, 0.8], data).unwrap();
                let back = vol_from_bytes(&volume_to_bytes(&v)).unwrap();
                prop_assert_eq!(back, VolData::Volume(v));

                let bits: Vec<bool> = (0..dims.len()).map(|_| rng.random_bool(0.4)).collect();
                let m = Mask3::from_bits(dims, bits).unwrap();
                let back = vol_from_bytes(&mask_to_bytes(&m)).unwrap();
                prop_assert_eq!(back, VolData::Mask(m));
            }

            #[test]
            fn window_is_monotone_and_idempotent_on_clamped(seed in any::<u64>()) {
                use rand::Rng;
                let mut rng = crate::seeds::rng_from(seed);
                let dims = Dims3::new(2, 3, 4);
                let mut vals: Vec<f32> = (0..dims.len()).map(|_| rng.random_range(-1500.0..500.0)).collect();
                let raw = Volume3::new_raw(dims, [1.0; 3], vals.clone()).unwrap();
                let win = hu_window(&raw, -800.0, 100.0).unwrap();

                // Monotone: sort the raw values, outputs sort identically.
                vals.sort_by(f32::total_cmp);
                let sorted = Volume3::new_raw(dims, [1.0; 3], vals).unwrap();
                let win_sorted = hu_window(&sorted, -800.0, 100.0).unwrap();
                for pair in win_sorted.data().windows(2) {
                    prop_assert!(pair[0] <= pair[1]);
                }

                // Idempotent on already-clamped data re-windowed over [0,1].
                let reraw = Volume3::new_raw(dims, [1.0; 3], win.data().to_vec()).unwrap();
                let rewin = hu_window(&reraw, 0.0, 1.0).unwrap();
                prop_assert_eq!(rewin.data(), win.data());
            }

            #[test]
            fn mask_composition_matches_conjunction(dims in arb_dims(), seed in any::<u64>()) {
                use rand::Rng;
                let mut rng = crate::seeds::rng_from(seed);
                let data: Vec<f32> = (0..dims.len()).map(|_| rng.random_range(0.0..1.0)).collect();
                let v = Volume3::new_windowed(dims, [1.0; 3], data).unwrap();
                let m1 = Mask3::from_bits(dims, (0..dims.len()).map(|_| rng.random_bool(0.5)).collect()).unwrap();
                let m2 = Mask3::from_bits(dims, (0..dims.len()).map(|_| rng.random_bool(0.5)).collect()).unwrap();
                let lhs = apply_mask(&v, &m1.and(&m2).unwrap()).unwrap();
                let rhs = apply_mask(&apply_mask(&v, &m1).unwrap(), &m2).unwrap();
                prop_assert_eq!(lhs, rhs);
            }

            #[test]
            fn bright_mask_matches_raw_hu_threshold(seed in any::<u64>(), tau in 0.05f64..0.95) {
                use rand::Rng;
                let mut rng = crate::seeds::rng_from(seed);
                let dims = Dims3::new(3, 3, 3);
                let vals: Vec<f32> = (0..dims.len()).map(|_| rng.random_range(-1200.0..300.0)).collect();
                let raw = Volume3::new_raw(dims, [1.0; 3], vals.clone()).unwrap();
                let win = hu_window(&raw, -800.0, 100.0).unwrap();
                let via_window = bright_mask(&win, tau).unwrap();
                // Direct HU-space threshold; the two routes agree except
                // within one ulp of the boundary, where random draws do not
                // land.
                let t_hu = -800.0 + tau * 900.0;
                let direct: Vec<bool> = vals.iter().map(|&v| v as f64 >= t_hu).collect();
                prop_assert_eq!(via_window.bits(), &direct[..]);
            }
        }
    }
}
