//! Record → image pipeline: parse, lay out, annotate, rasterize.
//!
//! Records that fail any stage are skipped with a reason rather than aborting
//! the whole dataset.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, ImageSource, LabeledRecord};
use crate::layout::{center_and_rotate, generate_coords, Coordinates, LayoutError, DEFAULT_BOND_LENGTH};
use crate::molgraph::{Molecule, SmilesError};
use crate::percept::{annotate, AtomAnnotations, PeoeParams, PerceptError, DEFAULT_PEOE_ITERATIONS};
use crate::raster::{
    make_noise_image, make_truth_image, rasterize, ChemImage, RasterError, SchemaKind, ScrambleMap,
    DEFAULT_NOISE_DENSITY, IMAGE_SIZE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RotationMode {
    /// Rotate coordinates, then rasterize again.
    #[default]
    Coordinates,
    /// Nearest-neighbor rotation of the finished image.
    Pixels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeConfig {
    pub schema: SchemaKind,
    pub noise_density: f64,
    /// Seeds the scramble map and the per-record noise images.
    pub seed: u64,
    pub bond_length: f64,
    pub peoe_iterations: usize,
    /// Task whose label drives Truth images.
    pub truth_task: usize,
    pub rotation: RotationMode,
}

impl EncodeConfig {
    pub fn new(schema: SchemaKind) -> EncodeConfig {
        EncodeConfig {
            schema,
            noise_density: DEFAULT_NOISE_DENSITY,
            seed: 0,
            bond_length: DEFAULT_BOND_LENGTH,
            peoe_iterations: DEFAULT_PEOE_ITERATIONS,
            truth_task: 0,
            rotation: RotationMode::Coordinates,
        }
    }
}

impl serde::Serialize for SchemaKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for SchemaKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SkipReason {
    #[error("smiles: {0}")]
    Smiles(#[from] SmilesError),
    #[error("layout: {0}")]
    Layout(#[from] LayoutError),
    #[error("annotation: {0}")]
    Percept(#[from] PerceptError),
    #[error("raster: {0}")]
    Raster(#[from] RasterError),
}

impl SkipReason {
    /// Short stage name for skip logs.
    pub fn stage(&self) -> &'static str {
        match self {
            SkipReason::Smiles(_) => "parse",
            SkipReason::Layout(_) => "layout",
            SkipReason::Percept(_) => "params",
            SkipReason::Raster(_) => "raster",
        }
    }
}

/// A record that made it through parsing, layout and annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRecord {
    pub record_id: usize,
    pub molecule: Molecule,
    /// Bounding-box centered.
    pub coords: Coordinates,
    pub annotations: Option<Vec<AtomAnnotations>>,
    pub labels: Vec<Option<f64>>,
}

pub struct Encoder {
    pub config: EncodeConfig,
    params: PeoeParams,
    scramble: Option<ScrambleMap>,
}

impl fmt::Debug for Encoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Encoder").field("config", &self.config).finish()
    }
}

/// splitmix64 finalizer, used to derive per-record seeds.
pub fn mix_seed(seed: u64, id: u64) -> u64 {
    let mut z = seed ^ id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Encoder {
    pub fn new(config: EncodeConfig, params: PeoeParams) -> Encoder {
        let scramble = (config.schema == SchemaKind::Scrambled).then(|| ScrambleMap::new(config.seed));
        Encoder { config, params, scramble }
    }

    pub fn channels(&self) -> usize {
        self.config.schema.channels()
    }

    /// Parse, lay out and annotate one record, then render it once to make
    /// sure it fits the image.
    pub fn prepare(&self, record: &LabeledRecord) -> Result<PreparedRecord, SkipReason> {
        let molecule = Molecule::from_smiles(&record.smiles)?;
        let coords = center_and_rotate(&generate_coords(&molecule, self.config.bond_length)?, 0.0);
        let kind = self.config.schema;
        let annotations = if kind.is_engineered() {
            let params = kind.needs_charges().then_some(&self.params);
            Some(annotate(&molecule, params, self.config.peoe_iterations)?)
        } else {
            None
        };
        let prepared = PreparedRecord {
            record_id: record.record_id,
            molecule,
            coords,
            annotations,
            labels: record.labels.clone(),
        };
        // geometry must fit even for schemas that ignore it, so record sets match across schemas
        rasterize(&prepared.molecule, &prepared.coords, None, SchemaKind::RedA, None)?;
        Ok(prepared)
    }

    /// Image for a prepared record, rotated when `rotation_deg` is given.
    pub fn render(&self, rec: &PreparedRecord, rotation_deg: Option<f64>) -> Result<ChemImage, RasterError> {
        let angle = rotation_deg.filter(|_| self.config.rotation == RotationMode::Coordinates);
        let coords = match angle {
            Some(a) => center_and_rotate(&rec.coords, a),
            None => rec.coords.clone(),
        };
        let img = self.render_at(rec, &coords)?;
        Ok(match rotation_deg {
            Some(a) if self.config.rotation == RotationMode::Pixels => img.rotate_pixels(a),
            _ => img,
        })
    }

    fn render_at(&self, rec: &PreparedRecord, coords: &Coordinates) -> Result<ChemImage, RasterError> {
        let kind = self.config.schema;
        match kind {
            SchemaKind::Noise => make_noise_image(
                mix_seed(self.config.seed, rec.record_id as u64),
                self.config.noise_density,
                1.0,
            ),
            SchemaKind::Truth => {
                let label = rec.labels.get(self.config.truth_task).copied().flatten() == Some(1.0);
                make_truth_image(&rec.molecule, coords, label)
            }
            _ => rasterize(
                &rec.molecule,
                coords,
                rec.annotations.as_deref(),
                kind,
                self.scramble.as_ref(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRecord {
    pub record_id: usize,
    pub smiles: String,
    pub reason: SkipReason,
}

/// Prepared records plus their unrotated images, addressable by record id.
#[derive(Debug)]
pub struct EncodedSet {
    pub encoder: Encoder,
    pub records: Vec<PreparedRecord>,
    pub images: Vec<ChemImage>,
    pub skipped: Vec<SkippedRecord>,
    pub tasks: usize,
    index: BTreeMap<usize, usize>,
}

impl EncodedSet {
    /// Collect per-record results in dataset order. `prepared[i]` belongs to
    /// `dataset.records[i]`.
    pub fn assemble(
        encoder: Encoder,
        dataset: &Dataset,
        prepared: Vec<Result<PreparedRecord, SkipReason>>,
    ) -> EncodedSet {
        let mut records = Vec::new();
        let mut images = Vec::new();
        let mut skipped = Vec::new();
        for (rec, result) in dataset.records.iter().zip(prepared) {
            match result.and_then(|p| encoder.render(&p, None).map(|img| (p, img)).map_err(SkipReason::from)) {
                Ok((p, img)) => {
                    records.push(p);
                    images.push(img);
                }
                Err(reason) => {
                    log::info!("skipping record {} ({}): {}", rec.record_id, rec.smiles, reason);
                    skipped.push(SkippedRecord {
                        record_id: rec.record_id,
                        smiles: rec.smiles.clone(),
                        reason,
                    });
                }
            }
        }
        let index = records.iter().enumerate().map(|(i, r)| (r.record_id, i)).collect();
        EncodedSet {
            encoder,
            records,
            images,
            skipped,
            tasks: dataset.tasks.len(),
            index,
        }
    }

    /// Sequential encode of a whole dataset.
    pub fn build(encoder: Encoder, dataset: &Dataset) -> EncodedSet {
        let prepared = dataset.records.iter().map(|r| encoder.prepare(r)).collect();
        EncodedSet::assemble(encoder, dataset, prepared)
    }

    pub fn ids(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.record_id).collect()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.index.contains_key(&id)
    }

    pub fn get(&self, id: usize) -> Option<&PreparedRecord> {
        self.index.get(&id).map(|&i| &self.records[i])
    }

    pub fn image(&self, id: usize) -> Option<&ChemImage> {
        self.index.get(&id).map(|&i| &self.images[i])
    }
}

impl ImageSource for EncodedSet {
    fn shape(&self) -> (usize, usize, usize) {
        (IMAGE_SIZE, IMAGE_SIZE, self.encoder.channels())
    }

    fn tasks(&self) -> usize {
        self.tasks
    }

    fn render(&self, id: usize, rotation_deg: Option<f64>) -> ChemImage {
        let i = self.index[&id];
        match rotation_deg {
            None => self.images[i].clone(),
            Some(a) => self.encoder.render(&self.records[i], Some(a)).unwrap_or_else(|e| {
                // a rotated drawing can poke out of the field; fall back to pixel rotation
                log::debug!("record {id} at {a:.1}°: {e}; using pixel rotation");
                self.images[i].rotate_pixels(a)
            }),
        }
    }

    fn labels(&self, id: usize) -> Vec<Option<f64>> {
        self.records[self.index[&id]].labels.clone()
    }
}
