//! Discretize 2D molecular depictions into 80×80 multi-channel images.
//!
//! A pixel covers 0.5 Å. Atom pixels are the nearest pixel to each atom
//! position; bonds are integer lines between atom pixels with both endpoints
//! excluded. Atom values overwrite bond values wherever they meet.

mod cimg;
mod preview;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::element::MAX_ATOMIC_NUMBER;
use crate::layout::Coordinates;
use crate::molgraph::Molecule;
use crate::percept::AtomAnnotations;

pub use cimg::{read_tensor_file, write_tensor_file, TensorFileError, CIMG_HEADER_LEN, CIMG_MAGIC};
pub use preview::export_png_preview;

pub const IMAGE_SIZE: usize = 80;
/// Å per pixel.
pub const RESOLUTION: f64 = 0.5;
/// Value written on bond pixels in Std-style channels.
pub const BOND_MARKER: f32 = 2.0;
pub const DEFAULT_NOISE_DENSITY: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RasterError {
    #[error("atom {atom} at ({x:.2}, {y:.2}) Å falls outside the {size}×{size} image")]
    MoleculeTooLarge { atom: usize, x: f64, y: f64, size: usize },
    #[error("atoms {a} and {b} both map to pixel (row {row}, col {col})")]
    AtomPixelCollision { a: usize, b: usize, row: usize, col: usize },
    #[error("schema {0} needs per-atom annotations")]
    MissingAnnotations(SchemaKind),
    #[error("schema {0} is not derived from molecule geometry alone")]
    UnsupportedSchema(SchemaKind),
    #[error("noise density must lie in (0, 1), got {0}")]
    InvalidDensity(f64),
    #[error("coordinates cover {coords} atoms but the molecule has {atoms}")]
    CoordinateCount { coords: usize, atoms: usize },
}

/// Real-valued image, row-major with channels fastest (H, W, C).
#[derive(Debug, Clone, PartialEq)]
pub struct ChemImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl ChemImage {
    pub fn zeros(height: usize, width: usize, channels: usize) -> ChemImage {
        ChemImage {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn blank(channels: usize) -> ChemImage {
        ChemImage::zeros(IMAGE_SIZE, IMAGE_SIZE, channels)
    }

    #[inline]
    pub fn offset(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[self.offset(row, col, ch)]
    }

    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f32) {
        let i = self.offset(row, col, ch);
        self.data[i] = value;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Pixels that are nonzero in any channel.
    pub fn support(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for r in 0..self.height {
            for c in 0..self.width {
                if (0..self.channels).any(|ch| self.get(r, c, ch) != 0.0) {
                    out.insert((r, c));
                }
            }
        }
        out
    }

    /// Pixels that are nonzero in one channel.
    pub fn channel_support(&self, ch: usize) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c, ch) != 0.0 {
                    out.insert((r, c));
                }
            }
        }
        out
    }

    /// Distinct nonzero values of one channel, by bit pattern.
    pub fn distinct_values(&self, ch: usize) -> Vec<f32> {
        let mut bits: Vec<u32> = (0..self.height * self.width)
            .map(|p| self.data[p * self.channels + ch])
            .filter(|v| *v != 0.0)
            .map(f32::to_bits)
            .collect();
        bits.sort_unstable();
        bits.dedup();
        bits.into_iter().map(f32::from_bits).collect()
    }

    /// Channel-major copy (C, H, W).
    pub fn to_chw(&self) -> Vec<f32> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; self.data.len()];
        for p in 0..plane {
            for ch in 0..self.channels {
                out[ch * plane + p] = self.data[p * self.channels + ch];
            }
        }
        out
    }

    /// Nearest-neighbor rotation by `angle_deg` about the image center.
    pub fn rotate_pixels(&self, angle_deg: f64) -> ChemImage {
        let mut out = ChemImage::zeros(self.height, self.width, self.channels);
        let (s, c) = angle_deg.to_radians().sin_cos();
        let (cr, cc) = ((self.height / 2) as f64, (self.width / 2) as f64);
        for r in 0..self.height {
            for col in 0..self.width {
                let (y, x) = (r as f64 - cr, col as f64 - cc);
                // inverse rotation of the destination pixel
                let sx = (c * x + s * y + cc).round();
                let sy = (-s * x + c * y + cr).round();
                if sx < 0.0 || sy < 0.0 || sx >= self.width as f64 || sy >= self.height as f64 {
                    continue;
                }
                for ch in 0..self.channels {
                    let v = self.get(sy as usize, sx as usize, ch);
                    out.set(r, col, ch, v);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemaKind {
    Std,
    RedA,
    RedB,
    EngA,
    EngB,
    EngC,
    EngD,
    Noise,
    Truth,
    Scrambled,
}

impl SchemaKind {
    pub const ALL: [SchemaKind; 10] = [
        SchemaKind::Std,
        SchemaKind::RedA,
        SchemaKind::RedB,
        SchemaKind::EngA,
        SchemaKind::EngB,
        SchemaKind::EngC,
        SchemaKind::EngD,
        SchemaKind::Noise,
        SchemaKind::Truth,
        SchemaKind::Scrambled,
    ];

    pub fn channels(self) -> usize {
        if self.is_engineered() {
            4
        } else {
            1
        }
    }

    pub fn is_engineered(self) -> bool {
        matches!(
            self,
            SchemaKind::EngA | SchemaKind::EngB | SchemaKind::EngC | SchemaKind::EngD
        )
    }

    /// Whether the schema has a partial-charge channel.
    pub fn needs_charges(self) -> bool {
        matches!(self, SchemaKind::EngA | SchemaKind::EngB | SchemaKind::EngD)
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemaKind::Std => "std",
            SchemaKind::RedA => "reda",
            SchemaKind::RedB => "redb",
            SchemaKind::EngA => "enga",
            SchemaKind::EngB => "engb",
            SchemaKind::EngC => "engc",
            SchemaKind::EngD => "engd",
            SchemaKind::Noise => "noise",
            SchemaKind::Truth => "truth",
            SchemaKind::Scrambled => "scrambled",
        }
    }
}

impl fmt::Display for SchemaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        SchemaKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| format!("unknown schema '{s}'"))
    }
}

/// Seeded bijection from element ids (atomic numbers and the bond marker) to
/// distinct values in 1..=120.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrambleMap {
    /// Index z-1 holds the value for atomic number z; the last slot is the bond marker.
    values: Vec<u8>,
    seed: u64,
}

pub const SCRAMBLE_RANGE: u8 = 120;

impl ScrambleMap {
    pub fn new(seed: u64) -> ScrambleMap {
        let mut pool: Vec<u8> = (1..=SCRAMBLE_RANGE).collect();
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        pool.truncate(MAX_ATOMIC_NUMBER as usize + 1);
        ScrambleMap { values: pool, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn atom(&self, atomic_number: u8) -> f32 {
        self.values[atomic_number as usize - 1] as f32
    }

    pub fn bond(&self) -> f32 {
        self.values[MAX_ATOMIC_NUMBER as usize] as f32
    }

    /// All mapped values: atomic numbers 1..=118 then the bond marker.
    pub fn values(&self) -> &[u8] {
        &self.values
    }
}

/// Image pixel for a position in Å: (row, col), or None when off-image.
pub fn pixel_of(point: [f64; 2]) -> Option<(usize, usize)> {
    let half = (IMAGE_SIZE / 2) as f64;
    let col = (point[0] / RESOLUTION + half).round();
    let row = (point[1] / RESOLUTION + half).round();
    let range = 0.0..IMAGE_SIZE as f64;
    if range.contains(&col) && range.contains(&row) {
        Some((row as usize, col as usize))
    } else {
        None
    }
}

/// Integer line between two pixels, endpoints excluded.
pub fn bresenham_interior(from: (usize, usize), to: (usize, usize)) -> Vec<(usize, usize)> {
    let (mut r, mut c) = (from.0 as i64, from.1 as i64);
    let (r1, c1) = (to.0 as i64, to.1 as i64);
    let dc = (c1 - c).abs();
    let dr = -(r1 - r).abs();
    let sc = if c < c1 { 1 } else { -1 };
    let sr = if r < r1 { 1 } else { -1 };
    let mut err = dc + dr;
    let mut out = Vec::new();
    loop {
        if (r, c) == (r1, c1) {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dr {
            err += dr;
            c += sc;
        }
        if e2 <= dc {
            err += dc;
            r += sr;
        }
        if (r, c) != (r1, c1) {
            out.push((r as usize, c as usize));
        }
    }
    out
}

/// Atom pixels (by atom index) and bond segments (by bond index).
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGeometry {
    pub atoms: Vec<(usize, usize)>,
    pub bonds: Vec<Vec<(usize, usize)>>,
}

pub fn pixel_geometry(mol: &Molecule, coords: &Coordinates) -> Result<PixelGeometry, RasterError> {
    if coords.len() != mol.atoms.len() {
        return Err(RasterError::CoordinateCount {
            coords: coords.len(),
            atoms: mol.atoms.len(),
        });
    }
    let mut atoms = Vec::with_capacity(mol.atoms.len());
    let mut owner = std::collections::BTreeMap::new();
    for (i, &p) in coords.points.iter().enumerate() {
        let px = pixel_of(p).ok_or(RasterError::MoleculeTooLarge {
            atom: i,
            x: p[0],
            y: p[1],
            size: IMAGE_SIZE,
        })?;
        if let Some(&j) = owner.get(&px) {
            return Err(RasterError::AtomPixelCollision {
                a: j,
                b: i,
                row: px.0,
                col: px.1,
            });
        }
        owner.insert(px, i);
        atoms.push(px);
    }
    let bonds = mol
        .bonds
        .iter()
        .map(|b| bresenham_interior(atoms[b.a], atoms[b.b]))
        .collect();
    Ok(PixelGeometry { atoms, bonds })
}

/// Rasterize a molecule under one of the geometry-derived schemas.
///
/// `annotations` is required for the Eng schemas and ignored otherwise;
/// `scramble` is required for Scrambled. Noise and Truth images come from
/// [`make_noise_image`] and [`make_truth_image`].
pub fn rasterize(
    mol: &Molecule,
    coords: &Coordinates,
    annotations: Option<&[AtomAnnotations]>,
    kind: SchemaKind,
    scramble: Option<&ScrambleMap>,
) -> Result<ChemImage, RasterError> {
    if matches!(kind, SchemaKind::Noise | SchemaKind::Truth) {
        return Err(RasterError::UnsupportedSchema(kind));
    }
    let geom = pixel_geometry(mol, coords)?;
    let ann = if kind.is_engineered() {
        let a = annotations.ok_or(RasterError::MissingAnnotations(kind))?;
        if a.len() != mol.atoms.len() {
            return Err(RasterError::MissingAnnotations(kind));
        }
        Some(a)
    } else {
        None
    };
    let identity_scramble;
    let scramble = match (kind, scramble) {
        (SchemaKind::Scrambled, Some(m)) => m,
        (SchemaKind::Scrambled, None) => return Err(RasterError::MissingAnnotations(kind)),
        _ => {
            identity_scramble = ScrambleMap::new(0);
            &identity_scramble
        }
    };

    let mut img = ChemImage::blank(kind.channels());
    // bond values per channel
    for (bond, pixels) in mol.bonds.iter().zip(&geom.bonds) {
        let order = bond.kind.order() as f32;
        let values: [f32; 4] = match kind {
            SchemaKind::Std | SchemaKind::RedB => [BOND_MARKER, 0.0, 0.0, 0.0],
            SchemaKind::RedA => [0.0; 4],
            SchemaKind::Scrambled => [scramble.bond(), 0.0, 0.0, 0.0],
            SchemaKind::EngA | SchemaKind::EngB | SchemaKind::EngC => [0.0, order, 0.0, 0.0],
            SchemaKind::EngD => [BOND_MARKER, 0.0, 0.0, 0.0],
            SchemaKind::Noise | SchemaKind::Truth => unreachable!(),
        };
        for &(r, c) in pixels {
            for (ch, &v) in values.iter().take(img.channels).enumerate() {
                img.set(r, c, ch, v);
            }
        }
    }
    for (i, atom) in mol.atoms.iter().enumerate() {
        let (r, c) = geom.atoms[i];
        let z = atom.atomic_number as f32;
        let values: [f32; 4] = match (kind, ann) {
            (SchemaKind::Std, _) => [z, 0.0, 0.0, 0.0],
            (SchemaKind::RedA | SchemaKind::RedB, _) => [1.0, 0.0, 0.0, 0.0],
            (SchemaKind::Scrambled, _) => [scramble.atom(atom.atomic_number), 0.0, 0.0, 0.0],
            (SchemaKind::EngA, Some(a)) => [
                z,
                0.0,
                a[i].partial_charge as f32,
                a[i].hybridization.code() as f32,
            ],
            (SchemaKind::EngB, Some(a)) => {
                [z, 0.0, a[i].partial_charge as f32, a[i].valence as f32]
            }
            (SchemaKind::EngC, Some(a)) => [
                z,
                0.0,
                a[i].valence as f32,
                a[i].hybridization.code() as f32,
            ],
            (SchemaKind::EngD, Some(a)) => [
                z,
                a[i].partial_charge as f32,
                a[i].valence as f32,
                a[i].hybridization.code() as f32,
            ],
            _ => unreachable!(),
        };
        for (ch, &v) in values.iter().take(img.channels).enumerate() {
            img.set(r, c, ch, v);
        }
    }
    Ok(img)
}

/// Exactly round(density·6400) distinct pixels set to `value`, positions drawn
/// without replacement from a ChaCha8 stream seeded with `seed`.
pub fn make_noise_image(seed: u64, density: f64, value: f32) -> Result<ChemImage, RasterError> {
    if !(density > 0.0 && density < 1.0) {
        return Err(RasterError::InvalidDensity(density));
    }
    let total = IMAGE_SIZE * IMAGE_SIZE;
    let count = (density * total as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = ChemImage::blank(1);
    for p in rand::seq::index::sample(&mut rng, total, count) {
        img.data[p] = value;
    }
    Ok(img)
}

/// RedB pixel support with every value equal to the label.
pub fn make_truth_image(mol: &Molecule, coords: &Coordinates, label: bool) -> Result<ChemImage, RasterError> {
    let mut img = rasterize(mol, coords, None, SchemaKind::RedB, None)?;
    let v = if label { 1.0 } else { 0.0 };
    for x in img.data.iter_mut() {
        if *x != 0.0 {
            *x = v;
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{center_and_rotate, generate_coords};
    use crate::percept::{annotate, PeoeParams};

    fn setup(s: &str) -> (Molecule, Coordinates) {
        let m = Molecule::from_smiles(s).unwrap();
        let c = center_and_rotate(&generate_coords(&m, 1.5).unwrap(), 0.0);
        (m, c)
    }

    fn count_value(img: &ChemImage, ch: usize, v: f32) -> usize {
        (0..img.height * img.width)
            .filter(|p| img.data[p * img.channels + ch] == v)
            .count()
    }

    #[test]
    fn methane_std_single_pixel() {
        let (m, c) = setup("C");
        let img = rasterize(&m, &c, None, SchemaKind::Std, None).unwrap();
        assert_eq!(img.support(), BTreeSet::from([(40, 40)]));
        assert_eq!(img.get(40, 40, 0), 6.0);
    }

    #[test]
    fn benzene_std_values() {
        let (m, c) = setup("c1ccccc1");
        let img = rasterize(&m, &c, None, SchemaKind::Std, None).unwrap();
        assert_eq!(count_value(&img, 0, 6.0), 6);
        assert!(count_value(&img, 0, 2.0) > 0);
        assert_eq!(img.distinct_values(0), vec![2.0, 6.0]);
    }

    #[test]
    fn methane_enga_channels() {
        let (m, c) = setup("C");
        let params = PeoeParams::default();
        let ann = annotate(&m, Some(&params), 6).unwrap();
        let img = rasterize(&m, &c, Some(&ann), SchemaKind::EngA, None).unwrap();
        assert_eq!(img.channel_support(0).len(), 1);
        assert_eq!(img.get(40, 40, 0), 6.0);
        assert!(img.channel_support(1).is_empty());
        assert_eq!(img.get(40, 40, 2), ann[0].partial_charge as f32);
        assert!(img.get(40, 40, 2) < 0.0);
        assert_eq!(img.get(40, 40, 3), 3.0);
    }

    #[test]
    fn aromatic_bond_order_channel() {
        let (m, c) = setup("c1ccccc1");
        let ann = annotate(&m, None, 6).unwrap();
        let img = rasterize(&m, &c, Some(&ann), SchemaKind::EngC, None).unwrap();
        assert_eq!(img.distinct_values(1), vec![1.5]);
        assert_eq!(img.distinct_values(2), vec![2.0]);
        assert_eq!(img.distinct_values(3), vec![2.0]);
    }

    #[test]
    fn long_chain_is_too_large() {
        // 40 zig-zag bonds span about 52 Å
        let (m, c) = setup(&"C".repeat(41));
        assert!(matches!(
            rasterize(&m, &c, None, SchemaKind::Std, None),
            Err(RasterError::MoleculeTooLarge { .. })
        ));
    }

    #[test]
    fn colliding_atoms_rejected() {
        let m = Molecule::from_smiles("C.C").unwrap();
        let c = Coordinates {
            points: vec![[0.0, 0.0], [0.1, 0.1]],
            relaxed: vec![false; 2],
        };
        assert_eq!(
            rasterize(&m, &c, None, SchemaKind::RedA, None),
            Err(RasterError::AtomPixelCollision { a: 0, b: 1, row: 40, col: 40 })
        );
    }

    #[test]
    fn pixel_rounding_is_half_away_from_zero() {
        assert_eq!(pixel_of([0.25, -0.25]), Some((40, 41)));
        assert_eq!(pixel_of([0.0, -0.26]), Some((39, 40)));
        assert_eq!(pixel_of([-20.0, -20.0]), Some((0, 0)));
        assert_eq!(pixel_of([19.74, 0.0]), Some((40, 79)));
        assert_eq!(pixel_of([19.75, 0.0]), None);
    }

    #[test]
    fn bresenham_excludes_endpoints() {
        assert_eq!(bresenham_interior((0, 0), (0, 3)), vec![(0, 1), (0, 2)]);
        assert_eq!(bresenham_interior((0, 0), (3, 3)), vec![(1, 1), (2, 2)]);
        assert!(bresenham_interior((5, 5), (5, 6)).is_empty());
        assert_eq!(bresenham_interior((2, 0), (0, 1)).len(), 1);
    }

    #[test]
    fn noise_counts() {
        assert_eq!(make_noise_image(3, 1.0 / 6400.0, 1.0).unwrap().support().len(), 1);
        let a = make_noise_image(7, 0.02, 1.0).unwrap();
        assert_eq!(a.support().len(), 128);
        assert_eq!(a, make_noise_image(7, 0.02, 1.0).unwrap());
        assert_ne!(a, make_noise_image(8, 0.02, 1.0).unwrap());
        assert!(make_noise_image(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn truth_images() {
        let (m, c) = setup("c1ccccc1");
        let redb = rasterize(&m, &c, None, SchemaKind::RedB, None).unwrap();
        let t1 = make_truth_image(&m, &c, true).unwrap();
        assert_eq!(t1.support(), redb.support());
        assert_eq!(t1.distinct_values(0), vec![1.0]);
        assert!(make_truth_image(&m, &c, false).unwrap().support().is_empty());
        let (m, c) = setup("C");
        let t = make_truth_image(&m, &c, true).unwrap();
        assert_eq!(t.support(), BTreeSet::from([(40, 40)]));
    }

    #[test]
    fn scramble_map_is_seeded_bijection() {
        let a = ScrambleMap::new(11);
        let mut v = a.values().to_vec();
        assert_eq!(v.len(), 119);
        v.sort_unstable();
        v.dedup();
        assert_eq!(v.len(), 119);
        assert!(v.iter().all(|&x| (1..=120).contains(&x)));
        assert_eq!(a, ScrambleMap::new(11));
        assert_ne!(a, ScrambleMap::new(12));

        let (m, c) = setup("c1ccccc1");
        let img = rasterize(&m, &c, None, SchemaKind::Scrambled, Some(&a)).unwrap();
        assert_eq!(count_value(&img, 0, a.atom(6)), 6);
    }

    #[test]
    fn pixel_rotation_keeps_center_fixed() {
        let (m, c) = setup("C");
        let img = rasterize(&m, &c, None, SchemaKind::Std, None).unwrap();
        assert_eq!(img.rotate_pixels(73.0), img);
        let (m, c) = setup("CC");
        let img = rasterize(&m, &c, None, SchemaKind::RedB, None).unwrap();
        assert_eq!(img.rotate_pixels(0.0), img);
        assert_eq!(img.rotate_pixels(90.0).support().len(), img.support().len());
    }

    #[test]
    fn schema_names_round_trip() {
        for k in SchemaKind::ALL {
            assert_eq!(k.name().parse::<SchemaKind>().unwrap(), k);
        }
        assert_eq!("EngA".parse::<SchemaKind>().unwrap(), SchemaKind::EngA);
        assert!("rgb".parse::<SchemaKind>().is_err());
    }
}
